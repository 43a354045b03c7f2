"""Command line runner: ``bpre <experiment> --config run.toml``.

The TOML config holds ``seed`` plus the blocks an experiment needs
(``model``, ``sim``, ``grid``, ``edgeworth``, ``renewal``, ``diagnostics``,
``output``, ``acceptance``). Unknown keys are errors. Every run writes its
CSV files and a ``summary.json`` (a list of ``{criterion, anchor, value,
threshold, pass}`` rows) to the output directory.

Exit codes: 0 all checks pass, 1 invalid configuration, 2 a structural
hypothesis of the model fails, 3 numerical or budget failure or a failed
check.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import acceptance
from .edgeworth import cdf_compare, edgeworth_series, standardize, write_cdf_table
from .envmodel import (EnvironmentModel, REFERENCE_MODELS, build_model, check_hypotheses,
                       log_a_cumulants)
from .errors import BPREError, ConfigError, HypothesisViolation, ModelError
from .fourier import (SGrid, convergence_fit, estimate_phi, lambda_band_sup, phi_deriv0,
                      phi_derivative_at_zero, write_fit_report)
from .limits import DECAY_KINDS, clt_statistic, decay_scan, renewal_windows
from .oracle import exact_distribution, exact_survival_curve
from .simulate import BLOCK_SIZE, SimPolicy, iter_blocks, survivor_ensemble

log = logging.getLogger("bpre")

EXPERIMENTS = ("simulate", "oracle-check", "charfn", "clt", "edgeworth", "renewal",
               "diagnostics", "full-acceptance")

REQUIRED = {
    "simulate": ("model", "sim"),
    "oracle-check": ("model", "sim"),
    "charfn": ("model", "sim", "grid"),
    "clt": ("model", "sim"),
    "edgeworth": ("model", "sim", "edgeworth"),
    "renewal": ("model", "sim", "renewal"),
    "diagnostics": ("model",),
    "full-acceptance": (),
}

_BLOCK_KEYS = {
    "sim": {"n", "trajectories", "exact_cap", "aggregate_cap", "survival_margin",
            "normal_approx_min_mean", "k_max"},
    "grid": {"s_max", "points"},
    "edgeworth": {"r", "q", "p"},
    "renewal": {"B", "C", "y_list"},
    "diagnostics": {"q", "p", "bands", "scans", "scan_n", "trajectories"},
    "output": {"directory", "formats"},
    "acceptance": {"criteria"},
}
_TOP_KEYS = {"experiment", "seed", "model", *_BLOCK_KEYS}
_SCAN_KEYS = {"kind", "param"}
FORMATS = ("csv", "json")


# --- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    experiment: str
    seed: int
    model: EnvironmentModel | None = None
    sim: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    edgeworth: dict = field(default_factory=dict)
    renewal: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)

    @property
    def policy(self) -> SimPolicy:
        keys = ("exact_cap", "aggregate_cap", "survival_margin", "normal_approx_min_mean")
        return SimPolicy(**{k: self.sim[k] for k in keys if k in self.sim})

    @property
    def n_values(self) -> list[int]:
        n = self.sim.get("n", [])
        return [int(v) for v in (n if isinstance(n, list) else [n])]

    @property
    def trajectories(self) -> int:
        return int(self.sim["trajectories"])


def _model_block(spec: dict) -> EnvironmentModel:
    if "reference" in spec:
        if set(spec) != {"reference"}:
            raise ConfigError("a model block with 'reference' takes no other keys")
        if spec["reference"] not in REFERENCE_MODELS:
            raise ConfigError(f"unknown reference model {spec['reference']!r}; "
                              f"known: {sorted(REFERENCE_MODELS)}")
        spec = REFERENCE_MODELS[spec["reference"]]
    return build_model(spec)


def parse_config(raw: dict, experiment: str, seed: int | None = None) -> RunConfig:
    """Validate a decoded TOML document for ``experiment``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for experiment {raw['experiment']!r}, not {experiment!r}")
    if seed is None:
        if "seed" not in raw:
            raise ConfigError("seed is mandatory")
        seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    for block in REQUIRED[experiment]:
        if block not in raw:
            raise ConfigError(f"experiment {experiment!r} needs a [{block}] block")
    blocks = {}
    for name, allowed in _BLOCK_KEYS.items():
        b = raw.get(name, {})
        if not isinstance(b, dict):
            raise ConfigError(f"[{name}] must be a table")
        extra = set(b) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) {sorted(extra)} in [{name}]")
        blocks[name] = dict(b)
    try:
        model = _model_block(raw["model"]) if "model" in raw else None
    except HypothesisViolation:
        raise
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"[model]: {exc}") from None
    cfg = RunConfig(experiment, seed, model, **blocks)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    exp = cfg.experiment
    if exp in ("simulate", "oracle-check", "charfn", "clt", "edgeworth", "renewal"):
        if "trajectories" not in cfg.sim:
            raise ConfigError("[sim] needs 'trajectories'")
        if cfg.trajectories < 1:
            raise ConfigError("trajectories must be >= 1")
        if exp != "renewal" and not cfg.n_values:
            raise ConfigError("[sim] needs 'n'")
        if any(n < 1 for n in cfg.n_values):
            raise ConfigError("all n must be >= 1")
        try:
            cfg.policy
        except (ModelError, TypeError) as exc:
            raise ConfigError(f"[sim]: {exc}") from None
    if exp == "charfn":
        try:
            SGrid.symmetric(float(cfg.grid.get("s_max", 0.5)), int(cfg.grid.get("points", 41)))
        except ModelError as exc:
            raise ConfigError(f"[grid]: {exc}") from None
    if exp == "edgeworth":
        e = cfg.edgeworth
        for k in ("r", "q", "p"):
            if k not in e:
                raise ConfigError(f"[edgeworth] needs '{k}'")
        r, q, p = e["r"], float(e["q"]), float(e["p"])
        if not isinstance(r, int) or not 3 <= r <= q - 1:
            raise ConfigError(f"order r = {r} outside r in [3, q-1] with q = {q:g}")
        if r > 8:
            raise ConfigError("order r above 8 is not supported")
        if not 1 < p <= 2:
            raise ConfigError("p must lie in (1, 2]")
    if exp == "renewal":
        rb = cfg.renewal
        for k in ("B", "C", "y_list"):
            if k not in rb:
                raise ConfigError(f"[renewal] needs '{k}'")
        if not 0 <= rb["B"] < rb["C"]:
            raise ConfigError("[renewal] needs 0 <= B < C")
        if not rb["y_list"] or any(not y > 0 for y in rb["y_list"]):
            raise ConfigError("[renewal] y_list must hold positive values")
    for scan in cfg.diagnostics.get("scans", []):
        if not isinstance(scan, dict) or set(scan) != _SCAN_KEYS:
            raise ConfigError("each diagnostics scan needs exactly 'kind' and 'param'")
        if scan["kind"] not in DECAY_KINDS:
            raise ConfigError(f"unknown scan kind {scan['kind']!r}")
    fmts = cfg.output.get("formats", list(FORMATS))
    if not set(fmts) <= set(FORMATS):
        raise ConfigError(f"output formats must be among {FORMATS}")
    crit = cfg.acceptance.get("criteria")
    if crit is not None and not set(crit) <= set(acceptance.CRITERIA):
        raise ConfigError("acceptance criteria must be numbers 1..10")


def load_config(path: Path | str, experiment: str, seed: int | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    return parse_config(raw, experiment, seed)


# --- summaries --------------------------------------------------------------

def row(criterion: str, anchor: str, value, threshold, passed: bool) -> dict:
    def plain(v):
        if v is None:
            return None
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return {"criterion": criterion, "anchor": anchor, "value": plain(value),
            "threshold": plain(threshold), "pass": bool(passed)}


def report(summaries: list[dict]) -> tuple[str, int]:
    """Consolidated table, failing rows first; exit 3 if any row fails."""
    rows = sorted(summaries, key=lambda r: bool(r["pass"]))
    head = ("criterion", "anchor", "value", "threshold", "pass")
    cells = [[str(r["criterion"]), str(r["anchor"]), _fmt(r["value"]), _fmt(r["threshold"]),
              "PASS" if r["pass"] else "FAIL"] for r in rows]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))] if cells else []
    lines += ["  ".join(c.ljust(w) for c, w in zip(cell, widths)) for cell in cells]
    code = 0 if all(r["pass"] for r in rows) else 3
    return "\n".join(lines), code


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# --- experiments ------------------------------------------------------------

def _require_hypotheses(model: EnvironmentModel, q: float, p: float, nonlattice: bool = False,
                        cramer: bool = False):
    rep = check_hypotheses(model, q, p)
    if not rep.h1:
        raise HypothesisViolation("H1", f"moment condition fails for q = {q:g}, p = {p:g}")
    if nonlattice and not rep.nonlattice:
        raise HypothesisViolation("nonlattice", "nonlattice required")
    if cramer and not rep.cramer:
        raise HypothesisViolation("cramer", "Cramer condition on lambda required for r >= 4")
    return rep


def run_simulate(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    rows = []
    for n in cfg.n_values:
        ens = survivor_ensemble(cfg.model, n, cfg.trajectories, cfg.seed, cfg.policy, threads)
        ens.to_csv(out / f"ensemble_n{n}.csv")
        rows.append(row(f"survival fraction n={n}", "S-proxy survivor filter",
                        ens.survival_fraction, None, True))
    return rows


def run_oracle_check(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model, N = cfg.model, cfg.trajectories
    k_max = cfg.sim.get("k_max")
    rows = []
    for n in cfg.n_values:
        dist = exact_distribution(model, n, k_max)
        dist.to_csv(out / f"exact_law_n{n}.csv")
        counts = np.zeros(dist.atoms.size + 1, dtype=np.int64)   # last cell: beyond window
        nblocks = -(-N // BLOCK_SIZE)
        for bp in iter_blocks(model, n, cfg.seed, cfg.policy, threads, stop_block=nblocks):
            lanes = min(BLOCK_SIZE, N - bp.block * BLOCK_SIZE)
            z = np.where(bp.logscale[n, :lanes], np.inf, bp.count[n, :lanes])
            idx = np.where(z <= dist.k_max, z, dist.k_max + 1).astype(np.int64)
            counts += np.bincount(idx, minlength=counts.size)
        emp = counts / N
        exact = np.append(dist.atoms, dist.tail_mass)
        tv = 0.5 * float(np.abs(emp - exact).sum())
        bound = 0.5 * float(np.sum(4 * np.sqrt(exact * (1 - exact) / N)))
        with open(out / f"oracle_vs_mc_n{n}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "exact", "empirical"])
            for k, (a, b) in enumerate(zip(exact, emp)):
                w.writerow([k if k <= dist.k_max else "tail", repr(float(a)), repr(float(b))])
        rows.append(row(f"total variation n={n}", "branching recursion", tv, bound, tv < bound))
    exact_survival_curve(model, max(cfg.n_values), k_max or 4096).to_csv(out / "survival_curve.csv")
    return rows


def run_charfn(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model = cfg.model
    grid = SGrid.symmetric(float(cfg.grid.get("s_max", 0.5)), int(cfg.grid.get("points", 41)))
    ests, ens_list = [], []
    for i, n in enumerate(sorted(cfg.n_values)):
        ens = survivor_ensemble(model, n, cfg.trajectories, cfg.seed, cfg.policy, threads)
        est = estimate_phi(ens, model, grid)
        est.to_csv(out / "charfn.csv", append=i > 0)
        ests.append(est)
        ens_list.append(ens)
    rows = []
    if len(ests) >= 5:
        table = np.array([e.phi for e in ests])
        ns = np.array([e.n for e in ests])
        fits = [convergence_fit(table[:, j], ns) for j in range(grid.points.size)
                if np.all(np.isfinite(table[:, j]))]
        write_fit_report(out / "convergence_fits.csv",
                         grid.points[np.all(np.isfinite(table), axis=0)], fits)
        rho = max(f.rho for f in fits)
        rows.append(row("geometric convergence of phi_n", "Fourier ratio recursion", rho, 1.0,
                        all(f.geometric for f in fits)))
        for j in (1, 2):
            d = phi_deriv0(ens_list, model, j)
            with open(out / f"phi_deriv{j}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["n", "re", "im", "stderr"])
                for n, v, e in zip(d.n, d.values, d.stderr):
                    w.writerow([int(n), repr(v.real), repr(v.imag), repr(float(e))])
                if not d.refused:
                    w.writerow(["limit", repr(d.limit.real), repr(d.limit.imag),
                                repr(d.limit_stderr)])
            rows.append(row(f"phi^({j})(0) extrapolation", f"limit of phi_n^({j})(0)",
                            None if d.refused else (d.limit / 1j**j).real,
                            None, not d.refused))
    return rows


def run_clt(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model = cfg.model
    res = []
    for n in sorted(cfg.n_values):
        ens = survivor_ensemble(model, n, cfg.trajectories, cfg.seed, cfg.policy, threads)
        res.append(clt_statistic(ens, model, n))
    with open(out / "clt.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "ks", "dkw"])
        for r in res:
            w.writerow([r.n, repr(r.ks), repr(r.dkw)])
    rows = [row(f"KS to Phi n={r.n}", "central limit theorem", r.ks, None, True) for r in res]
    if len(res) > 1:
        worst = max(b.ks - a.ks - 2 * (a.dkw + b.dkw) for a, b in zip(res, res[1:]))
        rows.append(row("KS decreasing in n (2 DKW bands)", "central limit theorem",
                        worst, 0.0, worst <= 0))
    return rows


def run_edgeworth(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model, e = cfg.model, cfg.edgeworth
    r, q, p = int(e["r"]), float(e["q"]), float(e["p"])
    _require_hypotheses(model, q, p, nonlattice=True, cramer=r >= 4)
    kappa = log_a_cumulants(model, r)
    n_ref = max(cfg.n_values)
    aux = survivor_ensemble(model, n_ref, cfg.trajectories, acceptance.sub_seed(cfg.seed, 7),
                            cfg.policy, threads)
    derivs = [phi_derivative_at_zero(aux, model, j) for j in range(1, r - 1)]
    del aux
    series = edgeworth_series(kappa, [d for d, _ in derivs], r)
    with open(out / "edgeworth_qk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "power", "coefficient"])
        for k, coeffs in sorted(series.Qk.items()):
            for j, c in enumerate(coeffs):
                w.writerow([k, j, repr(float(c))])
    with open(out / "phi_derivs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "re", "im", "stderr"])
        for j, (d, se) in enumerate(derivs, start=1):
            w.writerow([j, repr(d.real), repr(d.imag), repr(se)])
    rows = []
    with open(out / "cdf_distances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "r", "dist_phi", "dist_gr", "dkw"])
        for n in sorted(cfg.n_values):
            ens = survivor_ensemble(model, n, cfg.trajectories, cfg.seed, cfg.policy, threads)
            cmp = cdf_compare(ens, model, series, n, derivs[0][1])
            w.writerow(cmp.summary_row())
            write_cdf_table(out / f"cdf_n{n}.csv", standardize(ens, model, n), series, n)
            ok = (cmp.dist_gr + cmp.gr_band < cmp.dist_phi) or not cmp.phi_distinguishable
            rows.append(row(f"G_{r} closer than Phi n={n}", "Edgeworth expansion",
                            cmp.dist_gr, cmp.dist_phi, ok))
    return rows


def run_renewal(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model, rb = cfg.model, cfg.renewal
    if model.lattice:
        raise HypothesisViolation("nonlattice", "nonlattice required")
    B, C = float(rb["B"]), float(rb["C"])
    ests = [renewal_windows(model, [(B, C)], float(y), cfg.trajectories, cfg.seed,
                            cfg.policy, threads)[0] for y in rb["y_list"]]
    with open(out / "renewal.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "B", "C", "estimate", "stderr", "target"])
        for est in ests:
            w.writerow(est.row())
    rows = []
    for est in ests:
        rel = abs(est.estimate - est.target) / est.target
        rows.append(row(f"renewal y={est.y:g}", "renewal theorem", rel, 0.05, rel <= 0.05))
    if len(ests) > 1:
        ivs = [e.interval() for e in ests]
        overlap = max(lo for lo, _ in ivs) <= min(hi for _, hi in ivs)
        rows.append(row("renewal invariant in y", "renewal theorem", None, None, overlap))
    return rows


def run_diagnostics(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    model, d = cfg.model, cfg.diagnostics
    q, p = float(d.get("q", 4.0)), float(d.get("p", 2.0))
    rep = check_hypotheses(model, q, p)
    items = [("mu", rep.mu), ("sigma2", rep.sigma2), ("gamma", rep.gamma),
             ("h1_value", rep.h1_value), ("nonlattice", rep.nonlattice),
             ("strongly_nonlattice", rep.strongly_nonlattice), ("cramer", rep.cramer)]
    items += [(f"kappa_{k}", v) for k, v in enumerate(log_a_cumulants(model, 4), start=1)]
    for lo, hi in d.get("bands", []):
        items.append((f"sup_lambda_{lo:g}_{hi:g}", lambda_band_sup(model, (lo, hi))))
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in items:
            w.writerow([k, repr(float(v))])
    rows = [row("H1 moment condition", "moment hypothesis", rep.h1_value, None, rep.h1),
            row("H2 gamma < 1", "extinction hypothesis", rep.gamma, 1.0, rep.h2)]
    scans = d.get("scans", [])
    if scans:
        n_list = [int(n) for n in d.get("scan_n", list(range(1, 11)))]
        N = int(d.get("trajectories", 10**5))
        for scan in scans:
            res = decay_scan(model, scan["kind"], float(scan["param"]), n_list, N, cfg.seed,
                             cfg.policy, threads, q=q)
            res.to_csv(out / f"decay_{scan['kind']}.csv")
            name = f"{scan['kind']}({scan['param']:g})"
            if scan["kind"] == "log_moment":
                rows.append(row(f"{name} argmax n", "log-moment bound", res.argmax_n, 3,
                                res.argmax_n <= 3))
            else:
                rows.append(row(f"{name} decay rate", "decay lemmas",
                                0.0 if res.below_noise else res.rate, 0.0, res.decays))
    return rows


def run_full_acceptance(cfg: RunConfig, out: Path, threads: int) -> list[dict]:
    results = acceptance.run_acceptance(cfg.seed, threads, out, cfg.acceptance.get("criteria"))
    with open(out / "acceptance_details.json", "w") as fh:
        json.dump({str(c.number): c.detail for c in results}, fh, indent=2, default=_jsonable)
    return [c.summary() for c in results]


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return str(v)


RUNNERS = {
    "simulate": run_simulate, "oracle-check": run_oracle_check, "charfn": run_charfn,
    "clt": run_clt, "edgeworth": run_edgeworth, "renewal": run_renewal,
    "diagnostics": run_diagnostics, "full-acceptance": run_full_acceptance,
}


def run(cfg: RunConfig, out: Path | str | None = None, threads: int = 1) -> list[dict]:
    """Execute ``cfg``; returns the summary rows and writes summary.json."""
    out = Path(out or cfg.output.get("directory", "out"))
    out.mkdir(parents=True, exist_ok=True)
    rows = RUNNERS[cfg.experiment](cfg, out, threads)
    if "json" in cfg.output.get("formats", FORMATS):
        with open(out / "summary.json", "w") as fh:
            json.dump(rows, fh, indent=2)
    return rows


# --- figures ----------------------------------------------------------------

def render_figures(out: Path) -> list[Path]:
    """PNG renderings of the CDF tables and phi estimates (needs matplotlib)."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ConfigError("--figures needs matplotlib (pip install 'artifact[plots]')") from None
    made = []
    for path in sorted(out.rglob("cdf_n*.csv")):
        data = np.genfromtxt(path, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(data["x"], data["F_hat"] - data["Phi"], label="empirical - Phi")
        if np.all(np.isfinite(data["G_r"])):
            ax.plot(data["x"], data["G_r"] - data["Phi"], label="G_r - Phi")
        ax.set_xlabel("x")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path.with_suffix(".png"), dpi=120)
        plt.close(fig)
        made.append(path.with_suffix(".png"))
    charfn = out / "charfn.csv"
    if charfn.exists():
        data = np.genfromtxt(charfn, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for n in np.unique(data["n"]):
            sel = data["n"] == n
            ax.plot(data["s"][sel], np.hypot(data["re_phi"][sel], data["im_phi"][sel]),
                    label=f"n={int(n)}")
        ax.set_xlabel("s")
        ax.set_ylabel("|phi_n(s)|")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "charfn.png", dpi=120)
        plt.close(fig)
        made.append(out / "charfn.png")
    return made


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bpre", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--figures", action="store_true", help="also render PNGs (matplotlib)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.experiment, args.seed)
        rows = run(cfg, args.out, args.threads)
        if args.figures:
            render_figures(Path(args.out or cfg.output.get("directory", "out")))
    except BPREError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    table, code = report(rows)
    if table:
        print(table)
    return code


if __name__ == "__main__":
    sys.exit(main())
