"""
Command-line front end.

Usage::

    opbranges COMMAND --config run.json [--output-dir DIR] [--seed N]

The configuration is one JSON document (schema in
``opbranges/schema/config.schema.json``) holding the construction, optional
tolerances, validation grid settings, a seed and per-command parameters
under ``commands``. Each run writes ``<command>.json`` and, where there is
tabular data, one or more ``<command>*.csv`` files.

Exit status: 0 when the command's check passes, 2 on a validation or
property failure, 1 on usage or configuration errors.
"""

import argparse
import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from opbranges import __version__
from opbranges import debranges as dbr
from opbranges import specext
from opbranges.catalog import from_config
from opbranges.csys import CanonicalBacked, integral_identity_residual, trace, trace_csv
from opbranges.efun import CharacteristicHalfPlane, PotapovHalfPlane, inner_check
from opbranges.errors import OpBrangesError
from opbranges.io import (
    combo_to_dict,
    complex_from_json,
    dumps,
    matrix_csv,
    matrix_from_json,
    spectrum_csv,
    spectrum_to_dict,
    table_csv,
    vector_from_json,
)
from opbranges.linops import Tolerances, spectral_norm

__all__ = ["main", "run", "COMMANDS", "SCHEMA_VERSION", "OUTPUT_DIR_ENV"]

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "OPBRANGES_OUTPUT_DIR"
EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


def load_schema() -> dict:
    text = resources.files("opbranges").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class _Context:
    def __init__(self, cfg: dict, base_dir, seed):
        self.cfg = cfg
        self.base_dir = base_dir
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.tolerances = Tolerances(**cfg.get("tolerances", {}))
        vcfg = dict(cfg.get("validation", {}))
        self.tol = vcfg.pop("tol", 1e-10)
        self.inner_tol = vcfg.pop("inner_tol", 1e-8)
        self.xi0 = complex_from_json(vcfg.pop("xi0", [0.0, 1.0]))
        self.grid = dbr.ValidationGrid(**vcfg)
        self._db = None

    def params(self, command):
        return self.cfg.get("commands", {}).get(command, {})

    @property
    def db(self) -> dbr.DeBrangesOperator:
        if self._db is None:
            Em, Ep = from_config(self.cfg["construction"], self.base_dir)
            self._db = dbr.validate(Em, Ep, self.grid, self.tol, self.inner_tol, self.tolerances,
                                    raise_on_failure=False)
        return self._db

    @property
    def canonical_spec(self):
        Ep = self.db.Eplus
        if not isinstance(Ep, CanonicalBacked):
            raise UsageError("this command needs a 'canonical' construction")
        return Ep.system, Ep.r

    def random_points(self, count, box=(-2.0, 2.0, -2.0, 2.0)):
        xmin, xmax, ymin, ymax = box
        return self.rng.uniform(xmin, xmax, count) + 1j * self.rng.uniform(ymin, ymax, count)

    def random_vectors(self, count, n):
        v = self.rng.standard_normal((count, n)) + 1j * self.rng.standard_normal((count, n))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def pairs(self, params, count_default=10):
        if "pairs" in params:
            return [(complex_from_json(a), complex_from_json(b)) for a, b in params["pairs"]]
        box = params.get("box", (-2.0, 2.0, -2.0, 2.0))
        count = params.get("count", count_default)
        return list(zip(self.random_points(count, box), self.random_points(count, box)))


def _require_valid(ctx):
    """Refuse commands on a pair that failed validation."""
    rep = ctx.db.report
    if not rep.passed:
        return False, {"validation": rep.to_dict(), "refused": "construction failed validation"}, {}
    return None


def _V_from(ctx, params):
    V = params.get("V", "identity")
    n = ctx.db.dim
    if V == "identity":
        return np.eye(n, dtype=complex)
    if V == "minus_identity":
        return -np.eye(n, dtype=complex)
    if isinstance(V, dict):
        return specext.v_mu(ctx.db, V["mu"])
    return matrix_from_json(V)


def _spectrum(ctx, params):
    return specext.spectrum(
        ctx.db,
        _V_from(ctx, params),
        tuple(params.get("interval", (-3.5, 3.5))),
        params.get("grid_count", 2000),
        params.get("refine_iters", 60),
    )


# -- commands ---------------------------------------------------------------

def cmd_validate(ctx, params):
    rep = ctx.db.report
    return rep.passed, {"validation": rep.to_dict()}, {}


def cmd_kernel_eval(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    rows, sym = [], 0.0
    pairs = ctx.pairs(params)
    for k, (xi, z) in enumerate(pairs):
        K = dbr.kernel(ctx.db, xi, z)
        sym = max(sym, float(np.max(np.abs(K.conj().T - dbr.kernel(ctx.db, z, xi)))) / (1 + np.max(np.abs(K))))
        for i in range(K.shape[0]):
            for j in range(K.shape[1]):
                rows.append((k, xi.real, xi.imag, z.real, z.imag, i, j, K[i, j].real, K[i, j].imag))
    passed = sym <= 1e-11
    csvs = {"": table_csv(["pair", "xi_re", "xi_im", "z_re", "z_im", "row", "col", "re", "im"], rows)}
    return passed, {"pairs": len(pairs), "hermitian_symmetry_residual": sym}, csvs


def cmd_gram(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    n = ctx.db.dim
    if "points" in params:
        pts = vector_from_json(params["points"])
        vecs = [vector_from_json(v) for v in params.get("vectors", [])] or list(ctx.random_vectors(pts.size, n))
    else:
        count = params.get("count", 10)
        pts = ctx.random_points(count, params.get("box", (-2.0, 2.0, -2.0, 2.0)))
        vecs = list(ctx.random_vectors(count, n))
    G = dbr.gram(ctx.db, pts, vecs)
    herm = float(np.max(np.abs(G - G.conj().T)))
    w = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    tol = params.get("tol", ctx.tolerances.psd_tol)
    passed = bool(w[0] >= -tol * (1 + spectral_norm(G)))
    return passed, {"size": int(G.shape[0]), "min_eig": float(w[0]), "max_eig": float(w[-1]),
                    "hermitian_residual": herm, "tol": tol}, {"": matrix_csv(G)}


def cmd_positivity(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    rep = dbr.verify_positivity(ctx.db, params.get("count", 10), tuple(params.get("box", (-2.0, 2.0, -2.0, 2.0))),
                                ctx.seed, params.get("tol", 1e-10), params.get("trials", 200))
    return rep.passed, {"positivity": rep.to_dict()}, {}


def cmd_subspace_kernel(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    beta = complex_from_json(params["beta"])
    rows = []
    for k, (xi, z) in enumerate(ctx.pairs(params)):
        K = dbr.subspace_kernel(ctx.db, beta, xi, z, ctx.tolerances.rank_rel_tol)
        for i in range(K.shape[0]):
            for j in range(K.shape[1]):
                rows.append((k, xi.real, xi.imag, z.real, z.imag, i, j, K[i, j].real, K[i, j].imag))
    vanish = spectral_norm(dbr.subspace_kernel(ctx.db, beta, 0.3 + 0.1j, beta))
    passed = vanish <= 1e-11 * (1 + spectral_norm(dbr.kernel(ctx.db, beta, beta)))
    csvs = {"": table_csv(["pair", "xi_re", "xi_im", "z_re", "z_im", "row", "col", "re", "im"], rows)}
    return passed, {"beta": beta, "vanishing_residual": vanish}, csvs


def cmd_recover_e(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    beta = complex_from_json(params.get("beta", [0.0, 1.0]))
    tol = params.get("tol", 1e-8)
    Rm, Rp = dbr.recover_E(ctx.db, beta, ctx.tolerances)
    rows, worst = [], 0.0
    for xi, z in ctx.pairs(params, 50):
        K = dbr.kernel(ctx.db, xi, z)
        K2 = dbr.pair_kernel(Rm, Rp, xi, z)
        err = float(np.max(np.abs(K - K2))) / (1 + float(np.max(np.abs(K))))
        worst = max(worst, err)
        rows.append((xi.real, xi.imag, z.real, z.imag, err))
    return worst <= tol, {"beta": beta, "max_scaled_error": worst, "tol": tol}, {
        "": table_csv(["xi_re", "xi_im", "z_re", "z_im", "scaled_error"], rows)}


def cmd_spectrum(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    sp = _spectrum(ctx, params)
    mus, sig = sp.profile
    return (not sp.empty), {"spectrum": spectrum_to_dict(sp), "empty": sp.empty}, {
        "": spectrum_csv(sp),
        "_profile": table_csv(["mu", "sigma_min"], zip(mus, sig)),
    }


def cmd_eigenfunctions(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    sp = _spectrum(ctx, params.get("spectrum", {}))
    if sp.empty:
        return False, {"spectrum": spectrum_to_dict(sp), "empty": True}, {}
    orth = specext.orthogonality_check(ctx.db, sp, params.get("tol", 1e-8))
    funcs, rows = [], []
    for mu, B in zip(sp.nodes, sp.nullspaces):
        for k in range(B.shape[1]):
            g = specext.eigenfunction(ctx.db, mu, B[:, k])
            g.label = "construction"
            norm = dbr.gram_norm(ctx.db, g)
            funcs.append({"mu": float(mu), "index": k, "eigenfunction": combo_to_dict(g), "norm": norm})
            rows.append((float(mu), k, norm))
    return orth.passed, {"orthogonality": orth.to_dict(), "eigenfunctions": funcs}, {
        "": table_csv(["node", "index", "norm"], rows)}


def cmd_reconstruct(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    sp = _spectrum(ctx, params.get("spectrum", {}))
    if sp.empty:
        return False, {"empty": True}, {}
    n = ctx.db.dim
    if "function" in params:
        pts = vector_from_json(params["function"]["points"])
        coeffs = [vector_from_json(c) for c in params["function"]["coeffs"]]
    else:
        m = params.get("random_terms", 5)
        pts = ctx.rng.uniform(-2.0, 2.0, m).astype(complex)
        coeffs = list(ctx.random_vectors(m, n))
    f = dbr.KernelCombo(ctx.db, pts, coeffs, "construction")
    lo, hi, cnt = params.get("eval_grid", [-5.0, 5.0, 201])
    grid = np.linspace(lo, hi, int(cnt))
    levels = params.get("levels", [len(sp)])
    rep = specext.sampling_convergence(ctx.db, sp, f, grid, levels)
    return rep.monotone, {"convergence": rep.to_dict(), "function": combo_to_dict(f), "nodes": len(sp)}, {
        "": table_csv(["N", "sup_error"], zip(rep.levels, rep.errors))}


def cmd_canonical_identity(ctx, params):
    spec, r = ctx.canonical_spec
    tol = params.get("tol", 1e-6)
    rows, worst = [], 0.0
    for z, xi in ctx.pairs(params):
        res = integral_identity_residual(spec, r, z, xi)
        worst = max(worst, res)
        rows.append((z.real, z.imag, xi.real, xi.imag, res))
    tp = complex_from_json(params.get("trace_point", [0.0, 1.0]))
    return worst <= tol, {"max_residual": worst, "tol": tol, "r": r, "step": spec.step}, {
        "": table_csv(["z_re", "z_im", "xi_re", "xi_im", "residual"], rows),
        "_trace": trace_csv(trace(spec, r, [tp])),
    }


def cmd_inner_check(ctx, params):
    tol = params.get("tol", ctx.inner_tol)
    if "inner" in params:
        A = matrix_from_json(params["inner"]["A"])
        F = PotapovHalfPlane(A) if params["inner"]["kind"] == "potapov" else CharacteristicHalfPlane(A)
        rep = inner_check(F, ctx.grid.upper_points(), ctx.grid.real_points(), tol)
        subject = params["inner"]["kind"]
    else:
        rep = inner_check(ctx.db.F, ctx.grid.upper_points(), ctx.grid.real_points(), tol)
        subject = "construction"
    return rep.passed, {"subject": subject, "inner": rep.to_dict()}, {}


def cmd_isometry_check(ctx, params):
    bad = _require_valid(ctx)
    if bad:
        return bad
    tol = params.get("tol", 1e-9)
    n = ctx.db.dim
    if "samples" in params:
        samples = [(complex_from_json(s["beta"]), complex_from_json(s["w"]), vector_from_json(s["u"]))
                   for s in params["samples"]]
    else:
        count = params.get("count", 20)
        betas = ctx.rng.uniform(-2, 2, count) + 1j * ctx.rng.uniform(0.2, 2, count)
        ws = ctx.random_points(count)
        us = ctx.random_vectors(count, n)
        samples = list(zip(betas, ws, us))
    reports = [dbr.isometry_check(ctx.db, b, w, u, tol, ctx.tolerances) for b, w, u in samples]
    rows = [(r.beta.real, r.beta.imag, r.w.real, r.w.imag, r.f_norm_sq, r.h_norm_sq, r.difference)
            for r in reports]
    return all(r.passed for r in reports), {"checks": [r.to_dict() for r in reports], "tol": tol}, {
        "": table_csv(["beta_re", "beta_im", "w_re", "w_im", "f_norm_sq", "h_norm_sq", "difference"], rows)}


COMMANDS = {
    "validate": cmd_validate,
    "kernel-eval": cmd_kernel_eval,
    "gram": cmd_gram,
    "positivity": cmd_positivity,
    "subspace-kernel": cmd_subspace_kernel,
    "recover-e": cmd_recover_e,
    "spectrum": cmd_spectrum,
    "eigenfunctions": cmd_eigenfunctions,
    "reconstruct": cmd_reconstruct,
    "canonical-identity": cmd_canonical_identity,
    "inner-check": cmd_inner_check,
    "isometry-check": cmd_isometry_check,
}


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run(cfg: dict, command: str, output_dir, base_dir=None, seed=None) -> int:
    """Execute one command on a parsed configuration and write its reports."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc.message}") from exc
    seed = cfg.get("seed", 0) if seed is None else seed
    ctx = _Context(cfg, base_dir, seed)
    try:
        passed, result, csvs = COMMANDS[command](ctx, ctx.params(command))
    except (OpBrangesError, np.linalg.LinAlgError) as exc:
        passed, result, csvs = False, {"error": type(exc).__name__, "message": str(exc)}, {}

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "config_sha256": config_hash(cfg),
        "command": command,
        "seed": seed,
        "passed": bool(passed),
        "result": result,
    }
    _write(out / f"{command}.json", dumps(report))
    for suffix, text in csvs.items():
        _write(out / f"{command}{suffix}.csv", text)
    return EXIT_PASS if passed else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opbranges", description="de Branges space toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS), help="command to run")
    p.add_argument("--config", "-c", required=True, help="JSON run configuration")
    p.add_argument("--output-dir", "-o", help=f"report directory (default: config output_dir, then ${OUTPUT_DIR_ENV})")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"opbranges: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    output_dir = args.output_dir or cfg.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV) or "opbranges_out"
    try:
        return run(cfg, args.command, output_dir, str(Path(args.config).resolve().parent), args.seed)
    except (UsageError, ValueError, KeyError, TypeError) as exc:
        print(f"opbranges: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
