"""Command-line entry point (``loadshare``).

Every subcommand computes its full result before writing anything, so a
failing run leaves no partial output.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import __version__
from .estimators import (
    mle_location_scale,
    mle_order_restricted,
    mle_pooled_sos,
    mle_scale_family,
    mle_unrestricted_sequence,
    order_restrict,
)
from .experiments import (
    existence_study,
    kde_curve,
    mc_estimate_summary,
    power_study,
    proportionality_sweep,
    simulate_estimates,
)
from .files import (
    ESTIMATE_FIELDS,
    SCHEMA_VERSION,
    atomic_write,
    baseline_from_config,
    dataset_csv_text,
    estimate_rows,
    json_text,
    load_config,
    read_dataset_csv,
    read_wide_csv,
    rows_to_csv,
    scenario_from_config,
)
from .inference import (
    DEFAULT_PROBS,
    QuantileTable,
    bootstrap_null_spec,
    lrt_test,
    simulate_null_quantiles,
)
from .model import Dataset, transform_from_dict
from .simulator import ScenarioSpec, sample_dataset, substream

log = logging.getLogger("loadshare")


def _floats(text: str) -> list[float]:
    """Comma list ``a,b,c`` or range ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(output, text)


def _config(args) -> dict:
    return load_config(args.config) if getattr(args, "config", None) else {}


def _dataset(args, cfg) -> Dataset:
    n = args.n if args.n is not None else cfg.get("n")
    return read_dataset_csv(args.data, n)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> str:
    cfg = _config(args)
    spec = scenario_from_config(cfg, args.seed)
    r = args.r or int(cfg.get("r", 0))
    d = sample_dataset(spec, r, substream(spec.seed))
    return dataset_csv_text(d)


def _estimate_payload(d: Dataset, cfg: dict) -> dict:
    bcfg = cfg.get("baseline") or {}
    family = bcfg.get("family", "exponential") if isinstance(bcfg, dict) else "exponential"
    payload = {"schema_version": SCHEMA_VERSION, "n": d.n, "s": d.s, "r": d.r}
    if family == "location-scale" and "mu" not in bcfg:
        res = mle_location_scale(d, transform_from_dict(bcfg))
        restricted = res.params.alpha
        payload["mu"] = float(res.mu[0])
    elif family == "scale" and bcfg.get("rate") is None:
        res = mle_scale_family(d, transform_from_dict(bcfg))
        restricted = order_restrict(res.unrestricted.alpha, res.counts.m)
    else:
        b = baseline_from_config(cfg, d.n)
        res = mle_order_restricted(d, b)
        restricted = res.params.alpha
        pooled = mle_pooled_sos(d, b)
        payload["pooled"] = {
            "unrestricted": [float(x) for x in pooled.unrestricted],
            "restricted": [float(x) for x in pooled.restricted],
        }
    payload["targets"] = res.targets
    payload["estimates"] = estimate_rows(res.unrestricted.alpha, restricted, res.counts.m)
    return payload


def cmd_estimate(args) -> str:
    cfg = _config(args)
    d = _dataset(args, cfg)
    payload = _estimate_payload(d, cfg)
    if args.format == "csv":
        return rows_to_csv(payload["estimates"], ESTIMATE_FIELDS)
    return json_text(payload)


def cmd_estimate_seq(args) -> str:
    cfg = _config(args)
    d = _dataset(args, cfg)
    res = mle_unrestricted_sequence(d, baseline_from_config(cfg, d.n))
    rows = [
        {"component": j, "prefix": list(prefix), "level": len(prefix) + 1,
         "alpha": a, "m": res.counts.sequence[(j, prefix)]}
        for (j, prefix), a in sorted(res.params.sequence.items(), key=lambda kv: (len(kv[0][1]), kv[0][1], kv[0][0]))
    ]
    if args.format == "csv":
        for row in rows:
            row["prefix"] = " ".join(str(c) for c in row["prefix"])
        return rows_to_csv(rows, ["component", "prefix", "level", "alpha", "m"])
    return json_text({"schema_version": SCHEMA_VERSION, "n": d.n, "s": d.s, "r": d.r, "estimates": rows})


def cmd_null_quantiles(args) -> str:
    cfg = _config(args)
    if args.data:
        d = _dataset(args, cfg)
        spec = bootstrap_null_spec(d, baseline_from_config(cfg, d.n), args.seed)
        r = d.r
    else:
        spec = scenario_from_config(cfg, args.seed)
        r = args.r or int(cfg["r"])
    q = simulate_null_quantiles(spec, r, args.n_sim, _floats(args.probs))
    return json_text(q.to_dict())


def cmd_lrt(args) -> str:
    cfg = _config(args)
    d = _dataset(args, cfg)
    b = baseline_from_config(cfg, d.n)
    if args.quantiles:
        q = QuantileTable.from_dict(load_config(args.quantiles))
    else:
        if args.null_alpha:
            a = np.asarray(_floats(args.null_alpha))
            spec = ScenarioSpec(d.n, d.s, b, alpha=np.tile(a, (d.n, 1)), seed=args.seed)
        else:
            spec = bootstrap_null_spec(d, b, args.seed)
        probs = sorted({*DEFAULT_PROBS, round(1 - args.level, 12)})
        q = simulate_null_quantiles(spec, d.r, args.n_sim, probs)
    res = lrt_test(d, b, args.level, q)
    out = res.to_dict()
    out["quantiles"]["unreliable"] = q.unreliable
    if args.save_quantiles:
        atomic_write(args.save_quantiles, json_text(q.to_dict()))
    return json_text(out)


def cmd_mc(args) -> str:
    cfg = _config(args)
    spec = scenario_from_config(cfg, args.seed)
    r = args.r or int(cfg["r"])
    table = mc_estimate_summary(spec, r, args.reps, workers=args.workers)
    if args.format == "json":
        return json_text({"schema_version": SCHEMA_VERSION, **table.to_dict()})
    return table.to_csv()


def cmd_sweep(args) -> str:
    cfg = _config(args)
    n, s = int(cfg.get("n", args.n_sys)), int(cfg.get("s", args.s))
    b = baseline_from_config(cfg, n)
    kw = dict(baseline=b, seed=args.seed, workers=args.workers)
    if args.p:
        rows = proportionality_sweep(n, s, args.r, args.reps, p_values=_floats(args.p), **kw)
        fields = ["p"]
    else:
        p1s, p2s = _floats(args.p1), _floats(args.p2)
        rows = proportionality_sweep(n, s, args.r, args.reps, p_grid=[(a, c) for a in p1s for c in p2s], **kw)
        fields = ["p1", "p2"]
    fields += ["sum_rel_bias", "log_sum_rel_bias", "prop_exists"] + [f"mean_{k + 1}" for k in range(s)]
    for row in rows:
        for k, v in row.items():
            if isinstance(v, float) and math.isnan(v):
                row[k] = None
    return rows_to_csv(rows, fields)


def cmd_existence(args) -> str:
    rows = existence_study(_floats(args.ptilde), _ints(args.r_list), args.reps, n=args.n_sys, s=args.s,
                           p=args.p, seed=args.seed, mode=args.mode, workers=args.workers)
    return rows_to_csv(rows, ["ptilde", "r", "proportion", "reps", "mode"])


def cmd_power(args) -> str:
    study = power_study(args.design, _ints(args.r_list), args.combos, args.reps,
                        n_null=args.n_null, level=args.level, seed=args.seed, window=args.window)
    if args.format == "json":
        return json_text({
            "schema_version": SCHEMA_VERSION, "level": study.level, "window": study.window,
            "rows": study.rows,
            "running_mean": {str(r): {"distance": c[0].tolist(), "power": c[1].tolist()}
                             for r, c in study.curves.items()},
        })
    return study.to_csv()


def cmd_kde(args) -> str:
    if args.samples:
        vals = []
        with open(args.samples, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    vals.append(float(line.split(",")[args.column]))
                except ValueError:
                    continue  # header line
        samples = np.asarray(vals)
    else:
        cfg = _config(args)
        spec = scenario_from_config(cfg, args.seed)
        r = args.r or int(cfg["r"])
        unres, restr = simulate_estimates(spec, r, args.reps, workers=args.workers)
        arr = restr if args.estimator == "restricted" else unres
        samples = arr[:, args.component - 1, args.level - 1]
    curve = kde_curve(samples, num=args.points)
    return curve.to_csv()


def cmd_convert_wide(args) -> str:
    return dataset_csv_text(read_wide_csv(args.data, args.n))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loadshare", description="Estimation and testing for CPHR load-sharing systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("-o", "--output", help="output file (default: stdout)")
        return sp

    def data_args(sp):
        sp.add_argument("data", help="dataset CSV (trial,level,time,component)")
        sp.add_argument("--n", type=int, help="system size if the CSV lacks '# n=<int>'")
        sp.add_argument("--config", help="JSON config holding the baseline")

    sp = add("simulate", cmd_simulate, "simulate a dataset CSV")
    sp.add_argument("--config", required=True)
    sp.add_argument("--r", type=int)
    sp.add_argument("--seed", type=int)

    sp = add("estimate", cmd_estimate, "unrestricted and order-restricted estimates")
    data_args(sp)
    sp.add_argument("--format", choices=["json", "csv"], default="json")

    sp = add("estimate-seq", cmd_estimate_seq, "history-dependent unrestricted estimates")
    data_args(sp)
    sp.add_argument("--format", choices=["json", "csv"], default="json")

    sp = add("null-quantiles", cmd_null_quantiles, "simulate a null quantile table")
    sp.add_argument("data", nargs="?", help="dataset to bootstrap from (else the config scenario)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--config")
    sp.add_argument("--r", type=int)
    sp.add_argument("--n-sim", type=int, default=100_000)
    sp.add_argument("--probs", default=",".join(str(x) for x in DEFAULT_PROBS))
    sp.add_argument("--seed", type=int, default=0)

    sp = add("lrt", cmd_lrt, "likelihood ratio test of the pooled model")
    data_args(sp)
    sp.add_argument("--level", type=float, default=0.05)
    sp.add_argument("--n-sim", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quantiles", help="reuse a saved quantile table JSON")
    sp.add_argument("--save-quantiles", help="also write the quantile table here")
    sp.add_argument("--null-alpha", help="comma list of per-level null values instead of the bootstrap")

    sp = add("mc", cmd_mc, "Monte Carlo summary of both estimators")
    sp.add_argument("--config", required=True)
    sp.add_argument("--r", type=int)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")

    sp = add("sweep", cmd_sweep, "summed relative bias over proportionality factors")
    sp.add_argument("--config")
    sp.add_argument("--n-sys", type=int, default=4)
    sp.add_argument("--s", type=int, default=3)
    sp.add_argument("--r", type=int, default=10)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--p", help="values of p, e.g. 0.1:2:0.025")
    sp.add_argument("--p1", default="1")
    sp.add_argument("--p2", default="1")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("existence", cmd_existence, "proportion of existing order-restricted estimates")
    sp.add_argument("--ptilde", default="1,1.5,2")
    sp.add_argument("--r-list", default="5,10,25")
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--n-sys", type=int, default=4)
    sp.add_argument("--s", type=int, default=3)
    sp.add_argument("--p", type=float, default=1.5)
    sp.add_argument("--mode", choices=["per-entry", "all"], default="per-entry")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("power", cmd_power, "LRT power against distance to the null")
    sp.add_argument("--design", choices=["level1", "level2", "null"], default="level1")
    sp.add_argument("--r-list", default="10,25,50")
    sp.add_argument("--combos", type=int, default=100)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--n-null", type=int, default=2000)
    sp.add_argument("--level", type=float, default=0.05)
    sp.add_argument("--window", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")

    sp = add("kde", cmd_kde, "Gaussian kernel density curve")
    sp.add_argument("--samples", help="file with one sample per line (or CSV; see --column)")
    sp.add_argument("--column", type=int, default=0)
    sp.add_argument("--config")
    sp.add_argument("--r", type=int)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--component", type=int, default=1)
    sp.add_argument("--level", type=int, default=1)
    sp.add_argument("--estimator", choices=["unrestricted", "restricted"], default="restricted")
    sp.add_argument("--points", type=int, default=512)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("convert-wide", cmd_convert_wide, "convert a wide x1,c1,x2,c2 table to the long CSV")
    sp.add_argument("data")
    sp.add_argument("--n", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        text = args.func(args)
        _emit(text, args.output)
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"loadshare {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
