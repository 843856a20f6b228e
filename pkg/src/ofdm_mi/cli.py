"""Command-line interface: ``ofdm-mi <command> [options]``.

Every run emits one document (JSON by default, CSV with ``--out csv``)
that echoes the inputs, so ``--from-json`` can re-run it exactly.

Exit codes: 0 success, 1 unexpected error, 2 usage or domain error,
3 numerical non-convergence. Errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import asymptotic_moments as am
from . import exact_moments as em
from . import montecarlo as mc
from . import outage_dist as od
from .channel import PowerDelayProfile, SystemConfig, correlation_profile, parse_pdp
from .errors import NonConvergenceError

COMMANDS = ("mean", "variance", "distribution", "outage", "simulate", "validate", "sweep")
REGIMES = ("exact", "high", "low", "auto")
SUITES = ("cross-moment", "high-snr", "siso-anchors")
SWEEP_PARAMS = ("L", "K", "snr-db", "n")
THREADS_ENV = "OFDM_MI_THREADS"
HIGH_SNR_DB = 30.0
LOW_SNR_DB = -15.0
LOW_SNR_CAVEAT = 0.1  # linear SNR above which the low-SNR expansions are unreliable
SCHEMA_VERSION = 1


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    """Everything that determines a run's output. Thread count is excluded on purpose."""

    command: str
    nt: int = 2
    nr: int = 2
    n: int = 1
    snr_db: float = 10.0
    pdp: str = "uniform:L=1"
    regime: str = "exact"
    trials: int = 0
    seed: int = 1
    out: str = "json"
    q: tuple[float, ...] = (0.01,)
    suite: str = "cross-moment"
    param: str = "L"
    values: tuple[str, ...] = ()
    points: int = 41
    raw: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.regime not in REGIMES:
            raise UsageError(f"regime must be one of {REGIMES}")
        if self.out not in ("json", "csv"):
            raise UsageError("out must be json or csv")
        if self.suite not in SUITES:
            raise UsageError(f"suite must be one of {SUITES}")
        if self.param not in SWEEP_PARAMS:
            raise UsageError(f"param must be one of {SWEEP_PARAMS}")
        if self.trials < 0:
            raise UsageError("trials must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q"] = list(self.q)
        d["values"] = list(self.values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown input fields {sorted(extra)}")
        d = dict(d)
        for key in ("q", "values"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def cfg(self, **over) -> SystemConfig:
        kw = {"nt": self.nt, "nr": self.nr, "n": self.n, "snr_db": self.snr_db} | over
        return SystemConfig.from_db(kw["nt"], kw["nr"], kw["n"], kw["snr_db"])


@dataclass
class Document:
    spec: RunSpec
    results: dict = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "command": self.spec.command, "inputs": self.spec.to_dict(),
               "results": self.results}
        if self.rows:
            out["rows"] = self.rows
        if self.warnings:
            out["warnings"] = self.warnings
        return out


# ---------------------------------------------------------------------------
# computations


def _moments(spec: RunSpec, cfg: SystemConfig, pdp: PowerDelayProfile, threads, doc: Document) -> dict:
    corr = correlation_profile(pdp, cfg.subcarriers)
    regime = spec.regime
    if regime == "high":
        res = am.variance_high_snr(cfg, corr, threads=threads).to_dict()
    elif regime == "low":
        res = am.variance_low_snr(cfg, corr).to_dict()
        _low_caveat(cfg, doc)
    else:
        res = em.variance_exact(cfg, corr, threads=threads).to_dict()
        if regime == "auto":
            res["advisory"] = _advisory(cfg, corr, threads)
    return res


def _advisory(cfg: SystemConfig, corr, threads) -> dict:
    adv = {}
    if cfg.snr_db >= HIGH_SNR_DB:
        adv["high_snr"] = am.variance_high_snr(cfg, corr, threads=threads).to_dict()
    if cfg.snr_db <= LOW_SNR_DB:
        adv["low_snr"] = am.variance_low_snr(cfg, corr).to_dict()
    return adv


def _low_caveat(cfg: SystemConfig, doc: Document) -> None:
    if cfg.snr > LOW_SNR_CAVEAT:
        msg = (f"low-SNR expansion used at {cfg.snr_db:.1f} dB; it is only accurate in the low SNR "
               f"regime (SNR well below {10 * math.log10(LOW_SNR_CAVEAT):.0f} dB)")
        doc.warnings.append(msg)


def cmd_mean(spec, threads, doc):
    cfg = spec.cfg()
    if spec.regime == "high":
        doc.results = {"mean_bits": am.mean_high_snr(cfg), "regime": "high_snr"}
    elif spec.regime == "low":
        doc.results = {"mean_bits": am.mean_low_snr(cfg), "regime": "low_snr"}
        _low_caveat(cfg, doc)
    else:
        doc.results = {"mean_bits": em.mean_flat(cfg), "regime": "exact"}
        if spec.regime == "auto":
            adv = {}
            if cfg.snr_db >= HIGH_SNR_DB:
                adv["high_snr"] = {"mean_bits": am.mean_high_snr(cfg)}
            if cfg.snr_db <= LOW_SNR_DB:
                adv["low_snr"] = {"mean_bits": am.mean_low_snr(cfg)}
            doc.results["advisory"] = adv


def cmd_variance(spec, threads, doc):
    doc.results = _moments(spec, spec.cfg(), parse_pdp(spec.pdp), threads, doc)


def _fits(spec, threads, doc):
    cfg, pdp = spec.cfg(), parse_pdp(spec.pdp)
    mom = _moments(spec, cfg, pdp, threads, doc)
    pair = (mom["mean_bits"], mom["variance_bits2"])
    gauss = od.gaussian_approx(pair)
    gam = od.gamma_approx(pair)
    samples = mc.simulate_samples(cfg, pdp, spec.trials, spec.seed, threads) if spec.trials >= 2 else None
    return mom, gauss, gam, samples


def cmd_distribution(spec, threads, doc):
    mom, gauss, gam, samples = _fits(spec, threads, doc)
    doc.results = {"moments": mom, "gaussian": gauss.to_dict(), "gamma": gam.to_dict()}
    if samples is not None:
        doc.results["ks_gaussian"] = od.ks_distance(gauss, samples)
        doc.results["ks_gamma"] = od.ks_distance(gam, samples)
        doc.results["seed"] = spec.seed
    sd = math.sqrt(gauss.variance_bits2)
    grid = np.linspace(max(0.0, gauss.mean_bits - 5 * sd), gauss.mean_bits + 5 * sd, spec.points)
    cols = {
        "pdf_gaussian": od.pdf(gauss, grid), "cdf_gaussian": od.cdf(gauss, grid),
        "pdf_gamma": od.pdf(gam, grid), "cdf_gamma": od.cdf(gam, grid),
    }
    if samples is not None:
        srt = np.sort(samples)
        cols["ecdf"] = np.searchsorted(srt, grid, side="right") / srt.size
    doc.rows = [{"x_bits": float(x), **{k: float(v[i]) for k, v in cols.items()}} for i, x in enumerate(grid)]


def cmd_outage(spec, threads, doc):
    mom, gauss, _, samples = _fits(spec, threads, doc)
    doc.results = {"moments": mom, "gaussian": gauss.to_dict()}
    srt = np.sort(samples) if samples is not None else None
    for q in spec.q:
        row = {"q": q, "outage_bits": od.outage_capacity(gauss, q)}
        if srt is not None:
            row["ecdf_at_outage"] = float(np.searchsorted(srt, row["outage_bits"], side="right") / srt.size)
        doc.rows.append(row)
    if srt is not None:
        inside, worst = od.outage_in_dkw_band(gauss, srt, spec.q, alpha=0.01)
        doc.results.update(dkw_99_inside=bool(inside), dkw_worst_fraction=worst, seed=spec.seed)


def cmd_simulate(spec, threads, doc):
    if spec.trials < 2:
        raise UsageError("simulate needs --trials >= 2")
    cfg, pdp = spec.cfg(), parse_pdp(spec.pdp)
    samples = mc.simulate_samples(cfg, pdp, spec.trials, spec.seed, threads)
    doc.results = mc.summarize(samples, spec.seed).to_dict()
    if spec.raw:
        with open(spec.raw, "wb") as fh:
            doc.results["raw_bytes"] = mc.write_samples(samples, fh)
        doc.results["raw_path"] = spec.raw


def _two_tap(x: float) -> PowerDelayProfile:
    """Two-tap profile whose rho_1 over N = 2 subcarriers has |rho_1|^2 = x."""
    p = 0.5 * (1.0 + math.sqrt(x))
    return PowerDelayProfile((p, 1.0 - p))


def cmd_validate(spec, threads, doc):
    trials = spec.trials or 10**5
    if spec.suite == "cross-moment":
        from . import wishart_eig as we

        worst_rel, worst_z = 0.0, 0.0
        for nt, nr in ((1, 1), (1, 2), (2, 2)):
            for x in (0.1, 0.5, 0.9):
                for db in (0.0, 10.0):
                    cfg = SystemConfig.from_db(nt, nr, 2, db)
                    exact = em.cross_moment(cfg, math.sqrt(x))
                    quad = we.cross_functional(we.EigenPairDensity(cfg, x), we.mi_alpha(cfg), we.mi_alpha(cfg))
                    est = mc.estimate_cross_moment(cfg, _two_tap(x), 1, trials, spec.seed, threads)
                    rel = abs(exact - quad) / abs(exact)
                    z = max(abs(exact - est.value), abs(quad - est.value)) / est.stderr
                    worst_rel, worst_z = max(worst_rel, rel), max(worst_z, z)
                    doc.rows.append({"nt": nt, "nr": nr, "rho_mag2": x, "snr_db": db, "exact": exact,
                                     "quadrature": quad, "mc": est.value, "mc_stderr": est.stderr,
                                     "rel_dev": rel, "mc_z": z})
        doc.results = {"max_rel_deviation": worst_rel, "max_mc_z": worst_z,
                       "passed": worst_rel < 1e-6 and worst_z < 3.0}
    elif spec.suite == "high-snr":
        pdp = parse_pdp("uniform:L=8")
        worst = 0.0
        for nt, nr in ((1, 1), (1, 2), (2, 3)):
            for db, tol in ((30.0, 0.01), (35.0, 0.005), (40.0, 0.0025)):
                cfg = SystemConfig.from_db(nt, nr, 16, db)
                corr = correlation_profile(pdp, 16)
                ex = em.variance_exact(cfg, corr, threads).variance_bits2
                hi = am.variance_high_snr(cfg, corr, threads=threads).variance_bits2
                rel = (ex - hi) / hi
                worst = max(worst, abs(rel) / tol)
                doc.rows.append({"nt": nt, "nr": nr, "snr_db": db, "exact": ex, "high_snr": hi,
                                 "rel_gap": rel, "tolerance": tol})
        doc.results = {"worst_gap_over_tolerance": worst, "passed": worst <= 1.0}
    else:
        n = spec.n if spec.n > 1 else 16
        log2e2 = em.LOG2E2
        flat = am.variance_high_snr_siso(SystemConfig.from_db(1, 1, n, 40.0),
                                         correlation_profile(parse_pdp("uniform:L=1"), n)).variance_bits2
        indep = am.variance_high_snr_siso(SystemConfig.from_db(1, 1, n, 40.0),
                                          correlation_profile(parse_pdp(f"uniform:L={n}"), n)).variance_bits2
        doc.results = {
            "flat": flat, "flat_closed_form": log2e2 * math.pi ** 2 / 6,
            "independent": indep, "independent_closed_form": log2e2 * math.pi ** 2 / (6 * n),
        }
        doc.results["passed"] = (abs(flat / doc.results["flat_closed_form"] - 1) < 1e-10
                                 and abs(indep / doc.results["independent_closed_form"] - 1) < 1e-10)


def parse_values(values) -> list[str]:
    """Expand ``1..8`` ranges and comma lists."""
    out: list[str] = []
    for tok in values:
        for part in str(tok).split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..", 1)
                out.extend(str(v) for v in range(int(lo), int(hi) + 1))
            else:
                out.append(part)
    if not out:
        raise UsageError("sweep needs --values")
    return out


def _sweep_point(spec: RunSpec, value: str) -> tuple[SystemConfig, str]:
    base = spec.pdp
    if spec.param in ("L", "K"):
        pdp0 = base.split(":", 1)
        kind = pdp0[0]
        if spec.param == "L":
            if kind == "exp":
                k = base.split("K=", 1)[1]
                return spec.cfg(), f"exp:L={int(value)},K={k}"
            return spec.cfg(), f"uniform:L={int(value)}"
        if kind != "exp":
            raise UsageError("sweeping K needs an exponential --pdp")
        L = base.split("L=", 1)[1].split(",", 1)[0]
        return spec.cfg(), f"exp:L={L},K={float(value)}"
    if spec.param == "snr-db":
        return spec.cfg(snr_db=float(value)), base
    return spec.cfg(n=int(value)), base


def cmd_sweep(spec, threads, doc):
    for value in parse_values(spec.values):
        cfg, pdp_text = _sweep_point(spec, value)
        mom = _moments(spec, cfg, parse_pdp(pdp_text), threads, doc)
        doc.rows.append({
            "nt": cfg.nt, "nr": cfg.nr, "n": cfg.subcarriers, "snr_db": cfg.snr_db, "pdp": pdp_text,
            "regime": mom["regime"], "mean_bits": mom["mean_bits"], "variance_bits2": mom["variance_bits2"],
            "series_truncation_error": mom["series_truncation_error"],
        })
    doc.results = {"points": len(doc.rows)}


HANDLERS = {
    "mean": cmd_mean, "variance": cmd_variance, "distribution": cmd_distribution, "outage": cmd_outage,
    "simulate": cmd_simulate, "validate": cmd_validate, "sweep": cmd_sweep,
}


def run(spec: RunSpec, threads: int | None = None) -> Document:
    doc = Document(spec)
    HANDLERS[spec.command](spec, threads, doc)
    # dedupe repeated caveats from sweeps
    doc.warnings = list(dict.fromkeys(doc.warnings))
    return doc


# ---------------------------------------------------------------------------
# output


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def render(doc: Document) -> str:
    if doc.spec.out == "json":
        return json.dumps(doc.to_dict(), indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# command: {doc.spec.command}\n")
    buf.write(f"# inputs: {json.dumps(doc.spec.to_dict(), sort_keys=True)}\n")
    for w in doc.warnings:
        buf.write(f"# warning: {w}\n")
    if doc.rows:
        buf.write(f"# results: {json.dumps(doc.results, sort_keys=True)}\n")
        rows = doc.rows
    else:
        rows = [_flatten(doc.results)]
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        sys.exit(2)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ofdm-mi", description="Mutual-information statistics of MIMO-OFDM channels.")
    p.add_argument("--from-json", metavar="FILE", help="re-run the inputs echoed in a previous JSON output")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1); results do not depend on it")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--nt", type=_positive_int, default=2)
        s.add_argument("--nr", type=_positive_int, default=2)
        s.add_argument("--n", type=_positive_int, default=1, help="subcarriers")
        s.add_argument("--snr-db", type=float, default=10.0)
        s.add_argument("--pdp", default="uniform:L=1", help="uniform:L=4, exp:L=8,K=4, JSON or a JSON file")
        s.add_argument("--regime", choices=REGIMES, default="exact")
        s.add_argument("--trials", type=int, default=0)
        s.add_argument("--seed", type=int, default=1)
        s.add_argument("--out", choices=("json", "csv"), default="json")
        s.add_argument("--threads", type=_positive_int, default=None, dest="sub_threads")
        if name == "outage":
            s.add_argument("--q", type=float, nargs="+", default=[0.01])
        if name == "validate":
            s.add_argument("--suite", choices=SUITES, default="cross-moment")
        if name == "sweep":
            s.add_argument("--param", choices=SWEEP_PARAMS, default="L")
            s.add_argument("--values", nargs="+", default=[])
        if name == "distribution":
            s.add_argument("--points", type=_positive_int, default=41)
        if name == "simulate":
            s.add_argument("--raw", metavar="FILE", help="also write samples as little-endian float64")
    return p


def spec_from_args(ns: argparse.Namespace) -> RunSpec:
    kw = {k: v for k, v in vars(ns).items() if v is not None}
    kw.pop("from_json", None)
    kw.pop("threads", None)
    kw.pop("sub_threads", None)
    if "q" in kw:
        kw["q"] = tuple(kw["q"])
    if "values" in kw:
        kw["values"] = tuple(kw["values"])
    return RunSpec(**kw)


def _threads(ns) -> int:
    t = getattr(ns, "sub_threads", None) or ns.threads
    if t:
        return t
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            t = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if t < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return t
    return 1


def _emit_error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message, **extra}}) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse errors and --help; return the code instead of exiting
        return int(exc.code or 0)
    try:
        if ns.from_json:
            with open(ns.from_json) as fh:
                spec = RunSpec.from_dict(json.load(fh)["inputs"])
        elif ns.command is None:
            raise UsageError("a command is required (or --from-json)")
        else:
            spec = spec_from_args(ns)
        threads = _threads(ns)
        doc = run(spec, threads)
    except NonConvergenceError as exc:
        _emit_error("non_convergence", str(exc), what=exc.what, achieved=exc.achieved)
        return 3
    except (UsageError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _emit_error("usage", str(exc))
        return 2
    except Exception as exc:  # noqa: BLE001 - surface anything else machine-readably
        _emit_error("internal", f"{type(exc).__name__}: {exc}")
        return 1
    sys.stdout.write(render(doc))
    for w in doc.warnings:
        sys.stderr.write(f"warning: {w}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
