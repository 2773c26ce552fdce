"""Batch command-line frontend.

Subcommands compose into a file-based pipeline:
``synth | fit | diagnose | ppc | report`` plus ``ingest``, ``describe`` and
``anova``. Every output file starts with a comment header embedding the
effective configuration, and reruns with the same seed produce byte-identical
files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataError,
    Foot,
    Outcome,
    PreprocessResult,
    describe,
    describe_csv,
    parse_stride_csv,
    preprocess,
    serialize_stride_csv,
)
from .design import (
    DesignError,
    ModelSpec,
    ModelVariant,
    apply_prior_overrides,
    default_priors,
)
from .diagnostics import (
    CONVERGENCE_PSRF_UPPER,
    condition_diff_matrix,
    posterior_predictive,
    ppc_csv,
    summarize,
    summary_csv,
)
from .population import AnovaError, anova_csv, cell_means, rm_anova_2x2
from .sampler import SamplerConfig, SamplerError, chains_from_csv, chains_to_csv, run_sampler
from .synth import SynthStudy, generate_study, truth_csv

log = logging.getLogger("nof1gait")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3


class CliError(Exception):
    """Validation failure; maps to exit status 2."""


# ---------------------------------------------------------------------------
# Config file and provenance
# ---------------------------------------------------------------------------


def load_config(path: Path) -> dict[str, str]:
    """Simple ``key = value`` config file; '#' starts a comment."""
    config: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


def provenance_header(settings: dict) -> str:
    lines = [f"# nof1gait {__version__}"]
    for k in sorted(settings):
        lines.append(f"# {k}: {settings[k]}")
    return "\n".join(lines) + "\n"


def write_output(path: Path, settings: dict, body: str) -> None:
    path.write_text(provenance_header(settings) + body)
    log.info("wrote %s", path)


def prepare_output_dir(path: Path, force: bool) -> None:
    if path.exists():
        if not path.is_dir():
            raise CliError(f"output path {path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise CliError(f"output directory {path} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)


def read_data_csv(path: Path) -> str:
    if not path.exists():
        raise CliError(f"input file not found: {path}")
    return path.read_text()


def strip_comment_lines(text: str) -> str:
    return "\n".join(l for l in text.splitlines() if not l.startswith("#")) + "\n"


# ---------------------------------------------------------------------------
# Shared argument plumbing
# ---------------------------------------------------------------------------


def add_preprocess_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--foot", choices=["left", "right"], default=None)
    p.add_argument("--downsample", type=int, default=None)
    p.add_argument("--outlier-sd", type=float, default=None)


def add_sampler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--model", choices=["basic", "time", "ar1"], default=None)
    p.add_argument("--priors", choices=["noninformative", "informative"], default=None)


def _pick(args_value, config: dict, key: str, default, cast):
    """Flag > config file > default."""
    if args_value is not None:
        return args_value
    if key in config:
        return cast(config[key])
    return default


def resolve_preprocess(args, config: dict) -> dict:
    return {
        "foot": _pick(args.foot, config, "foot", "left", str),
        "downsample": _pick(args.downsample, config, "downsample", 5, int),
        "outlier_sd": _pick(getattr(args, "outlier_sd"), config, "outlier_sd", 3.0, float),
    }


def resolve_sampler(args, config: dict) -> dict:
    return {
        "chains": _pick(args.chains, config, "chains", 2, int),
        "iters": _pick(args.iters, config, "iters", 10000, int),
        "burn_in": _pick(args.burn_in, config, "burn_in", 5000, int),
        "thin": _pick(args.thin, config, "thin", 1, int),
        "seed": _pick(args.seed, config, "seed", 0, int),
        "model": _pick(args.model, config, "model", "ar1", str),
        "priors": _pick(args.priors, config, "priors", "noninformative", str),
    }


def run_preprocess(records, settings: dict) -> PreprocessResult:
    return preprocess(
        records,
        foot_filter=Foot(settings["foot"]),
        downsample_factor=settings["downsample"],
        outlier_sd=settings["outlier_sd"],
    )


def prior_overrides_from_config(config: dict) -> dict[str, dict]:
    """Collect ``prior.<param>.<field> = value`` entries from the config."""
    overrides: dict[str, dict] = {}
    for key, value in config.items():
        if not key.startswith("prior."):
            continue
        parts = key.split(".")
        if len(parts) != 3:
            raise CliError(f"bad prior config key {key!r}; expected prior.<param>.<field>")
        overrides.setdefault(parts[1], {})[parts[2]] = value
    return overrides


def build_model(variant_name: str, prior_regime: str, outcome: Outcome, config: dict) -> ModelSpec:
    variant = ModelVariant(variant_name)
    priors = default_priors(outcome, prior_regime == "informative", variant)
    overrides = prior_overrides_from_config(config)
    if overrides:
        priors = apply_prior_overrides(priors, overrides)
    return ModelSpec(variant=variant, outcome=outcome, priors=priors)


def resolve_outcomes(name: str) -> list[Outcome]:
    if name == "both":
        return [Outcome.STRIDE_LENGTH, Outcome.STRIDE_TIME]
    return [Outcome(name)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args, config) -> int:
    records = parse_stride_csv(read_data_csv(args.input))
    prepare_output_dir(args.output, args.force)
    settings = {"command": "ingest", "input": str(args.input), "n_records": len(records)}
    write_output(args.output / "records.csv", settings, serialize_stride_csv(records))
    return EXIT_OK


def cmd_describe(args, config) -> int:
    records = parse_stride_csv(read_data_csv(args.input))
    prepare_output_dir(args.output, args.force)
    settings = {"command": "describe", "input": str(args.input), "n_records": len(records)}
    write_output(args.output / "describe.csv", settings, describe_csv(describe(records)))
    return EXIT_OK


def cmd_anova(args, config) -> int:
    records = parse_stride_csv(read_data_csv(args.input))
    settings: dict = {"command": "anova", "input": str(args.input), "preprocessed": args.preprocessed}
    if args.preprocessed:
        pre_settings = resolve_preprocess(args, config)
        settings.update(pre_settings)
        result = run_preprocess(records, pre_settings)
        for w in result.warnings:
            log.warning("%s", w)
        # flatten preprocessed series back to per-stride values
        from .data import StrideRecord

        flattened = []
        for pid, per_outcome in result.series.items():
            length = {
                (o.condition, o.sequence_index): o.value
                for o in per_outcome[Outcome.STRIDE_LENGTH].observations
            }
            time = {
                (o.condition, o.sequence_index): o.value
                for o in per_outcome[Outcome.STRIDE_TIME].observations
            }
            for (cond, seq) in sorted(set(length) | set(time), key=lambda k: (k[0].value, k[1])):
                flattened.append(
                    StrideRecord(
                        participant_id=pid,
                        foot=Foot(pre_settings["foot"]),
                        condition=cond,
                        sequence_index=seq,
                        stride_length=length.get((cond, seq), 1.0),
                        stride_time=time.get((cond, seq), 1.0),
                    )
                )
        records = flattened

    prepare_output_dir(args.output, args.force)
    for outcome in Outcome:
        cells = cell_means(records, outcome)
        for w in cells.warnings:
            log.warning("%s", w)
        result = rm_anova_2x2(cells)
        out_settings = dict(settings, outcome=outcome.value, n_participants=result.n_participants)
        write_output(args.output / f"anova_{outcome.value}.csv", out_settings, anova_csv(result))
    return EXIT_OK


def _fit_one(pid, series, model, sampler_config):
    chains = run_sampler(model, series, sampler_config)
    return pid, chains, summarize(chains)


def cmd_fit(args, config) -> int:
    records = parse_stride_csv(read_data_csv(args.input))
    pre_settings = resolve_preprocess(args, config)
    smp_settings = resolve_sampler(args, config)
    result = run_preprocess(records, pre_settings)
    for w in result.warnings:
        log.warning("%s", w)

    pids = sorted(result.series)
    if args.participants:
        wanted = set(args.participants.split(","))
        missing = wanted - set(pids)
        if missing:
            raise CliError(f"unknown participants: {sorted(missing)}")
        pids = [p for p in pids if p in wanted]
    if not pids:
        raise CliError("no participants left to fit")
    outcomes = resolve_outcomes(args.outcome)

    prepare_output_dir(args.output, args.force)
    settings = {
        "command": "fit",
        "input": str(args.input),
        **pre_settings,
        **smp_settings,
        "outcome": args.outcome,
    }

    jobs = []
    for idx, pid in enumerate(pids):
        # deterministic per-participant seed derived from the run seed
        pid_seed = int(
            np.random.SeedSequence(
                entropy=smp_settings["seed"] & (2**64 - 1), spawn_key=(idx,)
            ).generate_state(1, dtype=np.uint64)[0]
        )
        sampler_config = SamplerConfig(
            n_chains=smp_settings["chains"],
            n_iterations=smp_settings["iters"],
            burn_in=smp_settings["burn_in"],
            thinning=smp_settings["thin"],
            seed=pid_seed,
        )
        for outcome in outcomes:
            model = build_model(smp_settings["model"], smp_settings["priors"], outcome, config)
            jobs.append((pid, result.series[pid][outcome], model, sampler_config))

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            fitted = list(pool.map(lambda j: _fit_one(*j), jobs))
    else:
        fitted = [_fit_one(*j) for j in jobs]

    manifest_rows = ["participant_id,outcome,converged,n_obs"]
    for pid, chains, summary in fitted:
        stem = f"{pid}_{chains.outcome.value}"
        write_output(args.output / f"chains_{stem}.csv", settings, chains_to_csv(chains))
        write_output(args.output / f"summary_{stem}.csv", settings, summary_csv(summary))
        manifest_rows.append(
            f"{pid},{chains.outcome.value},{str(summary.converged).lower()},{chains.n_obs}"
        )
        if not summary.converged:
            log.warning("fit %s did not converge (psrf_upper >= %.2f)", stem, CONVERGENCE_PSRF_UPPER)
    write_output(args.output / "manifest.csv", settings, "\n".join(manifest_rows) + "\n")

    run_config_lines = [f"{k} = {v}" for k, v in sorted(settings.items()) if k != "command"]
    (args.output / "run_config.txt").write_text("\n".join(run_config_lines) + "\n")
    return EXIT_OK


def _load_fit_chains(fit_dir: Path):
    paths = sorted(fit_dir.glob("chains_*.csv"))
    if not paths:
        raise CliError(f"no chain files found in {fit_dir}")
    return [chains_from_csv(p.read_text()) for p in paths]


def cmd_diagnose(args, config) -> int:
    all_chains = _load_fit_chains(args.fit_dir)
    prepare_output_dir(args.output, args.force)
    settings = {"command": "diagnose", "fit_dir": str(args.fit_dir)}
    rows = ["participant_id,outcome,parameter,psrf,psrf_upper,ess,converged"]
    any_nonconverged = False
    for chains in all_chains:
        summary = summarize(chains)
        fit_converged = summary.converged
        for name, p in summary.parameters.items():
            rows.append(
                f"{chains.participant_id},{chains.outcome.value},{name},"
                f"{p.psrf_point:.6g},{p.psrf_upper95:.6g},{p.ess:.6g},"
                f"{str(p.psrf_upper95 < CONVERGENCE_PSRF_UPPER).lower()}"
            )
        if not fit_converged:
            any_nonconverged = True
            log.warning(
                "non-converged fit: %s %s", chains.participant_id, chains.outcome.value
            )
    write_output(args.output / "diagnostics.csv", settings, "\n".join(rows) + "\n")
    if any_nonconverged and args.strict:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _preprocess_like_fit(args, config, fit_dir: Path):
    run_config_path = fit_dir / "run_config.txt"
    if not run_config_path.exists():
        raise CliError(f"missing {run_config_path}; was this directory produced by 'fit'?")
    fit_config = load_config(run_config_path)
    input_path = Path(args.input) if args.input else Path(fit_config["input"])
    records = parse_stride_csv(read_data_csv(input_path))
    pre_settings = {
        "foot": fit_config["foot"],
        "downsample": int(fit_config["downsample"]),
        "outlier_sd": float(fit_config["outlier_sd"]),
    }
    return run_preprocess(records, pre_settings), pre_settings


def cmd_ppc(args, config) -> int:
    all_chains = _load_fit_chains(args.fit_dir)
    result, pre_settings = _preprocess_like_fit(args, config, args.fit_dir)
    prepare_output_dir(args.output, args.force)
    settings = {"command": "ppc", "fit_dir": str(args.fit_dir), **pre_settings}
    for chains in all_chains:
        if chains.participant_id not in result.series:
            raise CliError(f"participant {chains.participant_id} missing from input data")
        series = result.series[chains.participant_id][chains.outcome]
        report = posterior_predictive(chains, series)
        stem = f"{chains.participant_id}_{chains.outcome.value}"
        write_output(args.output / f"ppc_{stem}.csv", settings, ppc_csv(report))
    return EXIT_OK


def cmd_report(args, config) -> int:
    all_chains = _load_fit_chains(args.fit_dir)
    prepare_output_dir(args.output, args.force)
    settings = {"command": "report", "fit_dir": str(args.fit_dir)}

    summaries = [summarize(c) for c in all_chains]
    # posterior summary data across participants (boxplot-style source table)
    rows = ["participant_id,outcome,parameter,mean,sd,q2.5,q97.5,converged"]
    for s in summaries:
        for name, p in s.parameters.items():
            rows.append(
                f"{s.participant_id},{s.outcome},{name},"
                f"{p.mean:.8g},{p.sd:.8g},{p.q2_5:.8g},{p.q97_5:.8g},"
                f"{str(s.converged).lower()}"
            )
    write_output(args.output / "posterior_summaries.csv", settings, "\n".join(rows) + "\n")

    # six condition-pair difference rows per outcome, one column per participant
    for outcome_value in sorted({s.outcome for s in summaries}):
        subset = [s for s in summaries if s.outcome == outcome_value]
        pids = [s.participant_id for s in subset]
        diffs = {s.participant_id: condition_diff_matrix(s) for s in subset}
        pairs = diffs[pids[0]]
        lines = ["pair," + ",".join(pids)]
        for i, pair in enumerate(pairs):
            label = f"{pair.minuend.value}-{pair.subtrahend.value}"
            values = ",".join(f"{diffs[pid][i].difference:.8g}" for pid in pids)
            lines.append(f"{label},{values}")
        write_output(
            args.output / f"heatmap_{outcome_value}.csv", settings, "\n".join(lines) + "\n"
        )
    return EXIT_OK


def cmd_synth(args, config) -> int:
    study = generate_study(
        n_participants=args.participants,
        seed=args.seed if args.seed is not None else 0,
        strides_per_condition=args.strides,
    )
    prepare_output_dir(args.output, args.force)
    settings = {
        "command": "synth",
        "participants": args.participants,
        "strides_per_condition": args.strides,
        "seed": args.seed if args.seed is not None else 0,
    }
    write_output(args.output / "synth_data.csv", settings, serialize_stride_csv(study.records))
    write_output(args.output / "synth_truth.csv", settings, truth_csv(study.truths))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {"level": record.levelname.lower(), "message": record.getMessage()}
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nof1gait",
        description="Per-person N-of-1 Bayesian analysis of repeated-measures gait trials",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--json-logs", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", type=Path, required=True)
        p.add_argument("--output", type=Path, required=True)
        p.add_argument("--force", action="store_true")

    p = sub.add_parser("ingest", help="validate and normalize a stride CSV")
    add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("describe", help="per-condition descriptive statistics")
    add_common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("anova", help="two-way repeated-measures ANOVA per outcome")
    add_common(p)
    p.add_argument("--preprocessed", action="store_true", help="apply the analysis preprocessing first")
    add_preprocess_args(p)
    p.set_defaults(func=cmd_anova)

    p = sub.add_parser("fit", help="fit the per-participant Bayesian models")
    add_common(p)
    add_preprocess_args(p)
    add_sampler_args(p)
    p.add_argument("--outcome", choices=["stride_length", "stride_time", "both"], default="both")
    p.add_argument("--participants", default=None, help="comma-separated participant filter")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="PSRF/ESS table for a fit directory")
    p.add_argument("--fit-dir", type=Path, required=True)
    add_common(p, needs_input=False)
    p.add_argument("--strict", action="store_true", help="exit 3 on any non-converged fit")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("ppc", help="posterior predictive checks for a fit directory")
    p.add_argument("--fit-dir", type=Path, required=True)
    p.add_argument("--input", type=Path, default=None, help="override the fit's input CSV path")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ppc)

    p = sub.add_parser("report", help="posterior summary and pairwise-difference tables")
    p.add_argument("--fit-dir", type=Path, required=True)
    add_common(p, needs_input=False)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic study with known truth")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--participants", type=int, default=16)
    p.add_argument("--strides", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    handler = logging.StreamHandler(sys.stderr)
    if args.json_logs:
        handler.setFormatter(_JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)

    config: dict[str, str] = {}
    try:
        if args.config is not None:
            config = load_config(args.config)
        return args.func(args, config)
    except (CliError, DataError, DesignError, AnovaError, ValueError) as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    except SamplerError as e:
        log.error("sampler failure: %s; state: %s", e, e.state)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
