"""Batch experiment runner.

Subcommands: params, run, plotdata, words, norms, describe.  A JSON config
file drives everything; command-line flags override config fields, which
override defaults.  Outputs are deterministic given (config, seed) and every
file echoes the config hash.  Exit codes: 0 success, 2 validation failure,
3 budget exceeded, 4 construction error.

Thread count comes from the SLOWTORUS_THREADS environment variable (numeric
work is vectorized; the variable caps the helper pool for orbit batches).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import complexity as cx
from . import diffeo, normest, params, reporting, scaling, words
from .experiments import build_systems
from .params import CustomStep, ParamProfile

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_CONSTRUCTION = 4


@dataclass(frozen=True)
class ExperimentConfig:
    construction: str = "untwisted"
    regime: str = "custom"
    q1: int = 2
    r: int = 4
    K: int = 2
    relax_eps: bool = True
    kl_schedule: tuple[tuple[int, int, int], ...] = ((1, 2, 4), (1, 64, 8), (1, 1, 64))
    n_min: int = 2
    n_max: int = 2
    grid: int = 32
    horizons: tuple[str, ...] = ("1", "q", "q_next")
    eps_list: tuple[float, ...] = (0.125,)
    families: tuple[tuple[str, int, int], ...] = (("int1", 4, 2), ("pol", 0, 0))
    t_grid: tuple[float, ...] = (0.5, 1.0)
    seed: int = 0
    outdir: str = "out"
    max_orbit_evals: float = 1e9
    horizon_cap: int = 4096
    hamming_samples: int = 2000
    hamming_partition: int = 8
    word_eps: float = 0.25
    sigma: Optional[float] = None
    cap_tiles: int = 64

    def profile(self) -> ParamProfile:
        if self.regime == "custom":
            steps = tuple(CustomStep(k=k, l=l, l_prime=lp) for (k, l, lp) in self.kl_schedule)
            return ParamProfile(
                regime="custom", q1=self.q1, relax_eps=self.relax_eps, custom=steps
            )
        return ParamProfile(
            regime=self.regime,
            q1=self.q1,
            r=self.r,
            K=self.K,
            relax_eps=self.relax_eps,
        )

    def scale_families(self) -> list[scaling.ScalingFamily]:
        out = []
        for kind, r, q1 in self.families:
            if kind in ("int1", "int2"):
                out.append(scaling.ScalingFamily(kind=kind, r=r, q1=q1))
            else:
                out.append(scaling.ScalingFamily(kind=kind))
        return out


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    data: dict = {}
    if path:
        data.update(json.loads(Path(path).read_text()))
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("kl_schedule", "horizons", "eps_list", "families", "t_grid"):
        if key in data and isinstance(data[key], list):
            data[key] = tuple(tuple(v) if isinstance(v, list) else v for v in data[key])
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise SystemExit(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**data)


def _resolve_horizons(cfg: ExperimentConfig, stage: params.StageParams) -> list[int]:
    out = []
    for h in cfg.horizons:
        if h == "1":
            out.append(1)
        elif h == "q":
            out.append(stage.q)
        elif h == "q_next":
            out.append(min(stage.q_next, cfg.horizon_cap))
        elif h == "lq":
            out.append(min(stage.l_prime * stage.q, cfg.horizon_cap))
        else:
            out.append(min(int(h), cfg.horizon_cap))
    return sorted(set(out))


# ---------------------------------------------------------------------------
# subcommands


def cmd_params(cfg: ExperimentConfig) -> int:
    profile = cfg.profile()
    chain = params.build_chain(profile, cfg.n_max)
    report = params.validate_chain(chain, profile)
    outdir = Path(cfg.outdir)
    reporting.write_with_header(outdir / "chain.json", cfg, params.chain_to_json(chain))
    body = "\n".join(report.lines()) + f"\npassed={report.passed}"
    reporting.write_with_header(outdir / "validation.txt", cfg, body)
    if not report.passed:
        for r in report.failures():
            print(f"validation failure: stage {r.stage} {r.name}: {r.detail}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"chain of {len(chain)} stages written to {outdir / 'chain.json'}")
    return EXIT_OK


def _budget_estimate(cfg: ExperimentConfig, horizons: Sequence[int]) -> float:
    per_stage = sum(h * cfg.grid * cfg.grid for h in horizons)
    hamming = max(horizons) * cfg.hamming_samples
    stages = max(1, cfg.n_max - cfg.n_min + 1)
    return float(stages * (per_stage * len(cfg.eps_list) + hamming))


def cmd_run(cfg: ExperimentConfig, force: bool = False) -> int:
    profile = cfg.profile()
    outdir = Path(cfg.outdir)
    try:
        built = build_systems(
            cfg.construction,
            profile,
            cfg.n_max,
            seed=cfg.seed,
            word_eps=cfg.word_eps,
            sigma=cfg.sigma,
            cap_tiles=cfg.cap_tiles,
        )
    except (diffeo.ConstructionError, words.SelectionError, ValueError) as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION

    all_horizons: list[int] = []
    for st in built.chain:
        if cfg.n_min <= st.n <= cfg.n_max:
            all_horizons.extend(_resolve_horizons(cfg, st))
    est = _budget_estimate(cfg, all_horizons)
    if est > cfg.max_orbit_evals and not force:
        print(
            f"budget exceeded: estimated {est:.3g} orbit evaluations "
            f"> {cfg.max_orbit_evals:.3g} (use --force to override)",
            file=sys.stderr,
        )
        return EXIT_BUDGET

    records: list[cx.CountRecord] = []
    summary: list[str] = []
    for st in built.chain:
        if not (cfg.n_min <= st.n <= cfg.n_max):
            continue
        sys_n = built.system(st.n)
        horizons = _resolve_horizons(cfg, st)
        for eps in cfg.eps_list:
            for m in horizons:
                bc = cx.BowenConfig(n_time=m, eps=eps, grid=cfg.grid)
                sep = cx.max_separated(sys_n, bc)
                cov = cx.min_cover(sys_n, bc)
                records.append(
                    cx.CountRecord(st.n, st.q, m, eps, "separated", sep.count)
                )
                records.append(cx.CountRecord(st.n, st.q, m, eps, "cover", cov))
            part = cx.GridPartition(cfg.hamming_partition, cfg.hamming_partition)
            m = max(horizons)
            ham = cx.hamming_cover(
                sys_n, part, m, max(cfg.eps_list), cfg.hamming_samples, cfg.seed
            )
            records.append(
                cx.CountRecord(st.n, st.q, m, max(cfg.eps_list), "hamming", ham.count)
            )
        if cfg.construction == "untwisted":
            wit = cx.witness_untwisted(
                sys_n, eps=cfg.eps_list[0], max_horizon=cfg.horizon_cap
            )
            ok = wit.all_separated and wit.count == wit.expected_count
            summary.append(
                f"stage {st.n}: witness separation "
                f"{'pass' if ok else 'FAIL'}{' (partial horizon)' if wit.partial else ''} "
                f"(count={wit.count}, expected={wit.expected_count}, "
                f"min separation={wit.min_pair_separation:.6g})"
            )
        sel = built.selections[[s.n for s in built.chain].index(st.n)]
        if sel is not None:
            reporting.write_with_header(
                outdir / f"selection_stage{st.n}.txt", cfg, sel.to_text()
            )
            summary.append(
                f"stage {st.n}: word selection verified={sel.verified} "
                f"(s={sel.alphabet_size}, k={sel.k}, N={sel.n_words})"
            )

    fams = [(fam, list(cfg.t_grid)) for fam in cfg.scale_families()]
    if len(records) >= 2:
        report = cx.slow_entropy_report(records, fams)
        reporting.write_with_header(
            outdir / "counts.csv", cfg, "\n".join(report.csv_lines())
        )
        trend_lines = [
            f"{fam},t={t},{kind}: {direction}"
            for (fam, t, kind), direction in sorted(report.trend.items())
        ]
        reporting.write_with_header(outdir / "trends.txt", cfg, "\n".join(trend_lines))
    reporting.write_csv(
        outdir / "raw_counts.csv",
        cfg,
        ("stage", "q", "horizon", "eps", "count_kind", "count"),
        [(r.stage, r.q, r.horizon, r.eps, r.count_kind, r.count) for r in records],
    )
    reporting.write_with_header(
        outdir / "summary.txt", cfg, "\n".join(summary) if summary else "no stage summaries"
    )
    print(f"run complete: {len(records)} count records in {outdir}")
    return EXIT_OK


def cmd_plotdata(report_files: Sequence[str], outdir: str) -> int:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for path_str in report_files:
        path = Path(path_str)
        lines = [
            ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")
        ]
        if not lines:
            continue
        header = lines[0].split(",")
        required = {"stage", "horizon", "family", "t", "log_ratio", "count_kind"}
        if not required.issubset(header):
            missing = sorted(required - set(header))
            print(f"{path}: missing columns {missing}", file=sys.stderr)
            return EXIT_VALIDATION
        idx = {name: header.index(name) for name in header}
        curves: dict = {}
        for ln in lines[1:]:
            cells = ln.split(",")
            key = (cells[idx["family"]], cells[idx["t"]], cells[idx["count_kind"]])
            curves.setdefault(key, []).append(
                (cells[idx["horizon"]], cells[idx["log_ratio"]])
            )
        for (fam, t, kind), rows in sorted(curves.items()):
            safe_fam = fam.replace(",", "_").replace("=", "")
            name = f"curve_{path.stem}_{safe_fam}_t{t}_{kind}.dat"
            body = "\n".join(f"{m} {v}" for m, v in rows)
            (out / name).write_text(body + "\n", newline="\n")
            manifest.append({"file": name, "source": str(path), "family": fam, "t": t, "kind": kind})
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", newline="\n"
    )
    print(f"{len(manifest)} curve files in {out}")
    return EXIT_OK


def cmd_words(cfg: ExperimentConfig, s: int, k: int, n_words: int, eps: float) -> int:
    try:
        sel = words.sample_selection(s=s, k=k, n_words=n_words, eps=eps, seed=cfg.seed)
    except words.SelectionError as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    outdir = Path(cfg.outdir)
    reporting.write_with_header(outdir / "selection.txt", cfg, sel.to_text())
    rep = words.verify_selection(sel)
    body = [
        f"threshold={rep.threshold!r}",
        f"uniform={rep.uniform}",
        f"min_pairwise={rep.min_pairwise!r}",
        f"min_self_sliding={rep.min_self_sliding!r}",
        f"passed={rep.passed}",
    ]
    reporting.write_with_header(outdir / "selection_report.txt", cfg, "\n".join(body))
    print(f"selection of {n_words} words written; verified={sel.verified}")
    return EXIT_OK


_NORM_NODES = {
    "rotation": lambda q, eps: diffeo.Rotation(Fraction(1, max(q, 1))),
    "quasi_rot": lambda q, eps: diffeo.QuasiRotTiled(q=q, eps=eps),
    "untwisted": lambda q, eps: diffeo.UntwistedH(q=q, eps=eps),
}


def cmd_norms(cfg: ExperimentConfig, node_kind: str, q: int, eps: float, k_max: int) -> int:
    if node_kind not in _NORM_NODES:
        print(f"unknown node kind {node_kind!r}; choose from {sorted(_NORM_NODES)}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        node = _NORM_NODES[node_kind](q, eps)
    except diffeo.ConstructionError as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    rows = []
    for k in range(0, k_max + 1):
        est = normest.triple_norm(node, k, grid=cfg.grid)
        rows.append(
            (
                f"{node_kind}(q={q},eps={eps})",
                k,
                est.value,
                est.grid,
                est.fd_step,
                est.excluded_fraction,
            )
        )
    reporting.write_csv(
        Path(cfg.outdir) / "norms.csv",
        cfg,
        ("node", "k", "estimate", "grid", "fd_step", "excluded_fraction"),
        rows,
    )
    print(f"{len(rows)} norm rows written")
    return EXIT_OK


def cmd_describe(cfg: ExperimentConfig) -> int:
    try:
        built = build_systems(
            cfg.construction,
            cfg.profile(),
            cfg.n_max,
            seed=cfg.seed,
            word_eps=cfg.word_eps,
            sigma=cfg.sigma,
            cap_tiles=cfg.cap_tiles,
        )
    except (diffeo.ConstructionError, words.SelectionError, ValueError) as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    for st in built.chain:
        if cfg.n_min <= st.n <= cfg.n_max:
            print(built.system(st.n).describe())
            print()
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--seed", type=int, help="64-bit experiment seed")
    p.add_argument("--construction", choices=["untwisted", "uniquely_ergodic", "weak_mixing"])
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--grid", type=int)


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("outdir", "seed", "construction", "n_max", "grid")
    return {k: getattr(args, k, None) for k in keys}


def main(argv: Optional[Sequence[str]] = None) -> int:
    os.environ.setdefault("SLOWTORUS_THREADS", "1")
    parser = argparse.ArgumentParser(prog="slowtorus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_params = sub.add_parser("params", help="build and validate a parameter chain")
    _add_common(p_params)

    p_run = sub.add_parser("run", help="run complexity measurements")
    _add_common(p_run)
    p_run.add_argument("--force", action="store_true", help="override the budget guard")

    p_plot = sub.add_parser("plotdata", help="extract plot curves from report CSVs")
    p_plot.add_argument("reports", nargs="+", help="counts.csv files")
    p_plot.add_argument("--outdir", default="plotdata")

    p_words = sub.add_parser("words", help="sample and verify a word selection")
    _add_common(p_words)
    p_words.add_argument("--alphabet", type=int, default=4)
    p_words.add_argument("--length", type=int, default=2000)
    p_words.add_argument("--count", type=int, default=40)
    p_words.add_argument("--eps", type=float, default=1.0 / 16.0)

    p_norms = sub.add_parser("norms", help="finite-difference norm estimates")
    _add_common(p_norms)
    p_norms.add_argument("--node", default="quasi_rot")
    p_norms.add_argument("--q", type=int, default=4)
    p_norms.add_argument("--eps", type=float, default=0.1)
    p_norms.add_argument("--k-max", type=int, default=1, dest="k_max")

    p_desc = sub.add_parser("describe", help="print the built map stack")
    _add_common(p_desc)

    args = parser.parse_args(argv)

    if args.command == "plotdata":
        return cmd_plotdata(args.reports, args.outdir)

    cfg = load_config(getattr(args, "config", None), _overrides(args))
    if args.command == "params":
        return cmd_params(cfg)
    if args.command == "run":
        return cmd_run(cfg, force=args.force)
    if args.command == "words":
        return cmd_words(cfg, args.alphabet, args.length, args.count, args.eps)
    if args.command == "norms":
        return cmd_norms(cfg, args.node, args.q, args.eps, args.k_max)
    if args.command == "describe":
        return cmd_describe(cfg)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
