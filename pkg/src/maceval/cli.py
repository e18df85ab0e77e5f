"""Command-line surface.

Subcommands: validate, mace, mace-test, eval, cohort, project, synth.
Reports are JSON + CSV (plus optional matplotlib figures rendered to SVG or
PNG next to them); all outputs are byte-deterministic for identical inputs
and flags. Exit codes: 0 success, 2 validation error, 3 I/O error,
4 statistical non-estimability.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import DataFormatError, MacevalError, NotEstimableError, UndersampledWarning
from .ingest import load_bundle, load_embedding_set
from .ingest.types import EmbeddingSet
from .mace import mace_between
from .modality import (
    Modality,
    ModalityHistogram,
    PixelRangeRule,
    fraction_sweep,
    lesion_fractions,
    resolve_ce_flags,
    video_modality_histogram,
)
from .deteval import (
    BootstrapConfig,
    Curve,
    MatchConfig,
    SweepEvaluator,
    bootstrap_curve_tprs,
    bootstrap_tpr_deltas,
    build_curve,
    default_sweep,
    tpr_at_fapm,
)
from .project import TsneConfig, pca_2d, tsne_2d
from .report import RunConfig, provenance, write_csv_report, write_json_report
from .stats import (
    Decision,
    non_inferiority,
    percentile_ci,
    resample_units,
    superiority_one_sided,
    z_test_two_sided,
)
from .synth import SynthScenario, write_artifact_tree

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NOT_ESTIMABLE = 4


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotEstimableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_ESTIMABLE
    except (DataFormatError, MacevalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=17)
    common.add_argument("--resamples", type=int, default=1000)
    common.add_argument("--margin", type=float, default=0.015)
    common.add_argument("--fapm", type=str, default="0.5,1.0",
                        help="comma-separated FAPM operating points")
    common.add_argument("--window", type=int, default=7)
    common.add_argument("--iou", type=float, default=0.2)
    common.add_argument("--ce-rule", type=str, default=None,
                        help="path to a pixel-range rule JSON")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--strict", action="store_true",
                        help="reject unknown JSONL fields")
    common.add_argument("--figures", action="store_true",
                        help="render figures next to the delimited output")
    common.add_argument("--fig-format", choices=("svg", "png"), default="svg")

    parser = argparse.ArgumentParser(prog="maceval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"maceval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common],
                       help="parse and cross-validate an artifact tree")
    p.add_argument("data", type=str)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mace", parents=[common],
                       help="MACE distance between two embedding sets with bootstrap CI")
    p.add_argument("set_a", type=str)
    p.add_argument("set_b", type=str)
    p.add_argument("--keys-a", type=str, default=None)
    p.add_argument("--keys-b", type=str, default=None)
    p.add_argument("--label-a", type=str, default=None)
    p.add_argument("--label-b", type=str, default=None)
    p.set_defaults(func=cmd_mace)

    p = sub.add_parser("mace-test", parents=[common],
                       help="pairwise z-tests between groups' MACE-to-reference distances")
    p.add_argument("--reference", type=str, required=True)
    p.add_argument("--reference-keys", type=str, default=None)
    p.add_argument("--group", action="append", default=[], metavar="NAME=PATH[:KEYS]",
                   help="repeatable labeled embedding set")
    p.set_defaults(func=cmd_mace_test)

    p = sub.add_parser("eval", parents=[common],
                       help="TPR-vs-FAPM curve; with a second tree, compare datasets")
    p.add_argument("data", type=str)
    p.add_argument("data_b", type=str, nargs="?", default=None)
    p.add_argument("--thresholds", type=int, default=50,
                   help="size of the score-threshold grid")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cohort", parents=[common],
                       help="modality visibility sweep with non-inferiority tests")
    p.add_argument("data", type=str)
    p.add_argument("--modality", choices=("nbi", "ce"), required=True)
    p.add_argument("--min-cohort", type=int, default=100)
    p.add_argument("--sweep-step", type=float, default=0.1)
    p.add_argument("--frames-root", type=str, default=None,
                   help="PPM root for pixel CE classification")
    p.add_argument("--thresholds", type=int, default=50)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("project", parents=[common],
                       help="2-D projection (PCA or t-SNE) of embedding sets")
    p.add_argument("sets", nargs="+", metavar="[LABEL=]PATH",
                   help="embedding binaries, optionally labeled")
    p.add_argument("--method", choices=("pca", "tsne"), default="tsne")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--sample", type=int, default=0,
                   help="subsample each set to at most this many rows (0: all)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("synth", parents=[common],
                       help="write a synthetic input-artifact tree from a scenario")
    p.add_argument("scenario", type=str)
    p.set_defaults(func=cmd_synth)

    return parser


# --- shared plumbing ----------------------------------------------------------

def _run_config(args) -> RunConfig:
    return RunConfig(
        seed=args.seed,
        resamples=args.resamples,
        margin=args.margin,
        fapm_points=tuple(float(x) for x in args.fapm.split(",") if x),
        window=args.window,
        iou=args.iou,
        ce_rule=args.ce_rule,
        strict=args.strict,
        figures=args.figures,
        fig_format=args.fig_format,
    )


def _out_dir(args) -> Path:
    if not args.out:
        raise ValueError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bootstrap_config(config: RunConfig) -> BootstrapConfig:
    return BootstrapConfig(n_resamples=config.resamples, seed=config.seed)


def _csv_preamble(prov: dict) -> dict[str, str]:
    pre = {"tool": f"{prov['tool']} {prov['version']}",
           "config": json.dumps(prov["config"], sort_keys=True)}
    for path, digest in prov["inputs"].items():
        pre[f"input {path}"] = digest
    return pre


def _sweep(config: RunConfig, n_thresholds: int):
    return default_sweep(window=config.window, n_thresholds=n_thresholds)


def _spec_paths(spec: str) -> list[str]:
    """Input paths named by a [LABEL=]PATH[:KEYS] embedding-set spec."""
    _, _, rest = spec.partition("=")
    rest = rest or spec
    path, _, keys = rest.partition(":")
    return [path] + ([keys] if keys else [])


def _load_labeled_sets(specs: Sequence[str]) -> list[tuple[str, EmbeddingSet]]:
    out = []
    for spec in specs:
        label, _, rest = spec.partition("=")
        if not rest:
            label, rest = Path(spec).stem, spec
        path, _, keys = rest.partition(":")
        out.append((label, load_embedding_set(path, keys or None)))
    return out


# --- MACE bootstrap helpers -----------------------------------------------------

def _row_groups(emb: EmbeddingSet) -> list[np.ndarray]:
    """Resampling units: one group per video when keys exist, else per row."""
    if emb.keys is None:
        return [np.array([i]) for i in range(emb.n)]
    groups: dict[str, list[int]] = {}
    for i, key in enumerate(emb.keys):
        groups.setdefault(key.video_id, []).append(i)
    return [np.asarray(groups[v], dtype=np.intp) for v in sorted(groups)]


def _bootstrap_mace(
    set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: BootstrapConfig
) -> np.ndarray:
    """Group-level bootstrap distribution of the MACE distance.

    Both sides consume the same resample stream, so identical inputs give a
    degenerate all-zero distribution.
    """
    units_a = _row_groups(set_a)
    units_b = _row_groups(set_b)
    values = np.empty(cfg.n_resamples)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndersampledWarning)
        for i in range(cfg.n_resamples):
            rows_a = np.concatenate(
                [units_a[j] for j in resample_units(len(units_a), cfg, i)]
            )
            rows_b = np.concatenate(
                [units_b[j] for j in resample_units(len(units_b), cfg, i)]
            )
            values[i] = mace_between(set_a.take(rows_a), set_b.take(rows_b)).value
    return values


# --- subcommands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    load_bundle(args.data, strict=args.strict)
    print(f"ok: {args.data}")
    return EXIT_OK


def cmd_mace(args) -> int:
    config = _run_config(args)
    out = _out_dir(args)
    set_a = load_embedding_set(args.set_a, args.keys_a)
    set_b = load_embedding_set(args.set_b, args.keys_b)
    label_a = args.label_a or Path(args.set_a).stem
    label_b = args.label_b or Path(args.set_b).stem

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndersampledWarning)
        estimate = mace_between(set_a, set_b)
    cfg = _bootstrap_config(config)
    values = _bootstrap_mace(set_a, set_b, cfg)
    lo, hi = percentile_ci(values, 0.95)

    inputs = [args.set_a, args.set_b] + [p for p in (args.keys_a, args.keys_b) if p]
    prov = provenance(config, inputs)
    payload = {
        "provenance": prov,
        "comparison": f"{label_a} vs {label_b}",
        "estimate": estimate.value,
        "ci": [lo, hi],
        "d": estimate.d,
        "n_a": estimate.n_a,
        "n_b": estimate.n_b,
        "n_resamples": cfg.n_resamples,
        "unit": "video" if set_a.keys is not None else "row",
    }
    write_json_report(out / "mace.json", payload)
    write_csv_report(
        out / "mace.csv",
        ["comparison", "estimate", "ci_lo", "ci_hi", "n_resamples", "seed"],
        [[payload["comparison"], estimate.value, lo, hi, cfg.n_resamples, cfg.seed]],
        preamble=_csv_preamble(prov),
    )
    print(f"{payload['comparison']}: MACE {estimate.value:.4f} CI ({lo:.4f}, {hi:.4f})")
    return EXIT_OK


def cmd_mace_test(args) -> int:
    config = _run_config(args)
    out = _out_dir(args)
    if len(args.group) < 2:
        raise ValueError("mace-test needs at least two --group entries")
    reference = load_embedding_set(args.reference, args.reference_keys)
    groups = _load_labeled_sets(args.group)

    cfg = _bootstrap_config(config)
    distributions: dict[str, np.ndarray] = {}
    summary: dict[str, dict] = {}
    for name, emb in groups:
        values = _bootstrap_mace(reference, emb, cfg)
        distributions[name] = values
        lo, hi = percentile_ci(values, 0.95)
        summary[name] = {"mean": float(values.mean()), "ci": [lo, hi], "n": emb.n}

    tests = []
    names = [name for name, _ in groups]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            result = z_test_two_sided(distributions[names[i]], distributions[names[j]])
            tests.append({"a": names[i], "b": names[j], **result.to_dict()})

    ordering = sorted(names, key=lambda n: summary[n]["mean"], reverse=True)
    inputs = [args.reference] + ([args.reference_keys] if args.reference_keys else [])
    for spec in args.group:
        inputs.extend(_spec_paths(spec))
    prov = provenance(config, inputs)
    payload = {
        "provenance": prov,
        "reference": Path(args.reference).stem,
        "groups": summary,
        "tests": tests,
        "ordering": ordering,
        "n_tests": len(tests),
    }
    write_json_report(out / "mace_test.json", payload)
    write_csv_report(
        out / "mace_test.csv",
        ["group_a", "group_b", "statistic", "p", "decision"],
        [[t["a"], t["b"], t["statistic"], t["p_display"], t["decision"]] for t in tests],
        preamble=_csv_preamble(prov),
    )
    print("ordering:", " > ".join(ordering))
    for t in tests:
        print(f"  {t['a']} vs {t['b']}: z={t['statistic']:.2f} p {t['p_display']} {t['decision']}")
    return EXIT_OK


def _curve_rows(curve: Curve) -> list[list]:
    return [[p.fapm, p.tpr] for p in curve.points]


def cmd_eval(args) -> int:
    config = _run_config(args)
    out = _out_dir(args)
    mcfg = MatchConfig(iou_threshold=config.iou)
    sweep = _sweep(config, args.thresholds)
    cfg = _bootstrap_config(config)

    bundle_a = load_bundle(args.data, strict=config.strict)
    label_a = Path(args.data).name or "a"
    eval_a = SweepEvaluator(bundle_a, sweep, mcfg)
    curve_a = build_curve(bundle_a, sweep=sweep, mcfg=mcfg)
    inputs = [args.data]
    curves = {label_a: curve_a}

    tprs_a, valid_a = bootstrap_curve_tprs(eval_a, config.fapm_points, cfg)
    operating = {}
    for k, point in enumerate(config.fapm_points):
        interp = tpr_at_fapm(curve_a, point)
        lo, hi = percentile_ci(tprs_a[valid_a, k], 0.95)
        operating[str(point)] = {
            "tpr": interp.value, "clamped": interp.clamped, "ci": [lo, hi],
        }

    payload = {
        "datasets": {label_a: {"operating_points": operating,
                               "n_videos": len(bundle_a.videos),
                               "n_polyps": len(bundle_a.tracks)}},
        "tests": [],
        "n_tests": 0,
    }

    if args.data_b:
        bundle_b = load_bundle(args.data_b, strict=config.strict)
        label_b = Path(args.data_b).name or "b"
        if label_b == label_a:
            label_b += "_b"
        eval_b = SweepEvaluator(bundle_b, sweep, mcfg)
        curve_b = build_curve(bundle_b, sweep=sweep, mcfg=mcfg)
        curves[label_b] = curve_b
        inputs.append(args.data_b)

        tprs_b, valid_b = bootstrap_curve_tprs(eval_b, config.fapm_points, cfg)
        operating_b = {}
        for k, point in enumerate(config.fapm_points):
            interp = tpr_at_fapm(curve_b, point)
            lo, hi = percentile_ci(tprs_b[valid_b, k], 0.95)
            operating_b[str(point)] = {
                "tpr": interp.value, "clamped": interp.clamped, "ci": [lo, hi],
            }
        payload["datasets"][label_b] = {
            "operating_points": operating_b,
            "n_videos": len(bundle_b.videos),
            "n_polyps": len(bundle_b.tracks),
        }

        deltas, n_dropped = bootstrap_tpr_deltas(eval_a, eval_b, config.fapm_points, cfg)
        tests = []
        for k, point in enumerate(config.fapm_points):
            sup = superiority_one_sided(deltas[k])
            noninf = non_inferiority(deltas[k], margin=config.margin)
            tests.append({"fapm": point, "delta": f"{label_b} - {label_a}",
                          "mode": "superiority", **sup.to_dict()})
            tests.append({"fapm": point, "delta": f"{label_b} - {label_a}",
                          "mode": "non_inferiority", **noninf.to_dict()})
        payload["tests"] = tests
        payload["n_tests"] = len(tests)
        payload["n_dropped_resamples"] = n_dropped

    prov = provenance(config, inputs)
    payload["provenance"] = prov
    write_json_report(out / "eval.json", payload)
    for label, curve in curves.items():
        write_csv_report(out / f"curve_{label}.csv", ["fapm", "tpr"],
                         _curve_rows(curve), preamble=_csv_preamble(prov))
    if config.figures:
        from .figures import curve_figure

        curve_figure(curves, out / f"curves.{config.fig_format}",
                     fapm_points=config.fapm_points)

    for label, info in payload["datasets"].items():
        for point, op in info["operating_points"].items():
            print(f"{label} @ {point} FAPM: TPR {op['tpr']:.4f} "
                  f"CI ({op['ci'][0]:.4f}, {op['ci'][1]:.4f})")
    for t in payload["tests"]:
        print(f"{t['mode']} @ {t['fapm']} FAPM: stat {t['statistic']:.3f} "
              f"p {t['p_display']} {t['decision']}")
    return EXIT_OK


def cmd_cohort(args) -> int:
    config = _run_config(args)
    out = _out_dir(args)
    mcfg = MatchConfig(iou_threshold=config.iou)
    sweep = _sweep(config, args.thresholds)
    cfg = _bootstrap_config(config)
    modality = Modality(args.modality)

    bundle = load_bundle(args.data, strict=config.strict)
    inputs = [args.data]
    if args.frames_root:
        rule = (PixelRangeRule.from_json(config.ce_rule)
                if config.ce_rule else PixelRangeRule())
        bundle = resolve_ce_flags(bundle, args.frames_root, rule)
        inputs.append(args.frames_root)
    if config.ce_rule:
        inputs.append(config.ce_rule)

    fractions = lesion_fractions(bundle, modality)
    sweep_result = fraction_sweep(
        bundle.tracks, fractions, step=args.sweep_step, min_cohort=args.min_cohort
    )

    reference_eval = SweepEvaluator(bundle, sweep, mcfg)
    ref_tprs, ref_valid = bootstrap_curve_tprs(reference_eval, config.fapm_points, cfg)
    ref_curve = build_curve(bundle, sweep=sweep, mcfg=mcfg)

    rows = []
    tests = []
    for threshold, cohort in sweep_result:
        polyp_filter = frozenset(t.polyp_id for t in cohort)
        eligible = sorted({t.video_id for t in cohort})
        cohort_eval = SweepEvaluator(bundle, sweep, mcfg, video_ids=eligible)
        cohort_tprs, cohort_valid = bootstrap_curve_tprs(
            cohort_eval, config.fapm_points, cfg, polyp_filter
        )
        cohort_curve = build_curve(bundle, video_ids=eligible, sweep=sweep,
                                   mcfg=mcfg, polyp_filter=polyp_filter)
        for k, point in enumerate(config.fapm_points):
            valid = cohort_valid & ref_valid
            delta = cohort_tprs[valid, k] - ref_tprs[valid, k]
            noninf = non_inferiority(delta, margin=config.margin)
            tests.append({"threshold": threshold, "fapm": point,
                          "mode": "non_inferiority", **noninf.to_dict()})
            cohort_tpr = tpr_at_fapm(cohort_curve, point).value
            lo, hi = percentile_ci(cohort_tprs[cohort_valid, k], 0.95)
            ref_point = tpr_at_fapm(ref_curve, point)
            rows.append({
                "threshold": threshold,
                "fapm": point,
                "n_polyps": len(cohort),
                "n_videos": len(eligible),
                "tpr": cohort_tpr,
                "ci": [lo, hi],
                "reference_tpr": ref_point.value,
                "non_inferior": noninf.decision is Decision.REJECT,
                "statistic": tests[-1]["statistic"],
                "p_display": tests[-1]["p_display"],
            })

    histogram = video_modality_histogram(bundle, modality)
    prov = provenance(config, inputs)
    payload = {
        "provenance": prov,
        "modality": modality.value,
        "min_cohort": args.min_cohort,
        "thresholds": [t for t, _ in sweep_result],
        "rows": rows,
        "tests": tests,
        "n_tests": len(tests),
        "histogram": {
            "bin_edges": list(histogram.bin_edges),
            "with_polyp": list(histogram.with_polyp),
            "without_polyp": list(histogram.without_polyp),
        },
    }
    write_json_report(out / f"cohort_{modality.value}.json", payload)
    write_csv_report(
        out / f"cohort_{modality.value}.csv",
        ["threshold", "fapm", "n_polyps", "n_videos", "tpr", "ci_lo", "ci_hi",
         "reference_tpr", "non_inferior", "statistic", "p"],
        [[r["threshold"], r["fapm"], r["n_polyps"], r["n_videos"], r["tpr"],
          r["ci"][0], r["ci"][1], r["reference_tpr"], r["non_inferior"],
          r["statistic"], r["p_display"]] for r in rows],
        preamble=_csv_preamble(prov),
    )
    write_csv_report(
        out / f"histogram_{modality.value}.csv",
        ["bin_lo", "bin_hi", "videos_total", "videos_with_polyp",
         "videos_without_polyp", "videos_at_least_bin_lo"],
        _histogram_rows(histogram),
        preamble=_csv_preamble(prov),
    )
    if config.figures:
        from .figures import cohort_figure, histogram_figure

        histogram_figure(histogram, out / f"histogram_{modality.value}.{config.fig_format}",
                         title=f"{modality.value.upper()} usage per video")
        for point in config.fapm_points:
            point_rows = [r for r in rows if r["fapm"] == point]
            if point_rows:
                cohort_figure(point_rows,
                              out / f"cohort_{modality.value}_{point}.{config.fig_format}",
                              modality.value.upper())

    if not rows:
        print(f"no {modality.value} cohort meets the {args.min_cohort}-polyp minimum")
    for r in rows:
        verdict = "non-inferior" if r["non_inferior"] else "not shown non-inferior"
        print(f"threshold {r['threshold']:.1f} @ {r['fapm']} FAPM: "
              f"TPR {r['tpr']:.4f} vs {r['reference_tpr']:.4f} [{verdict}]")
    return EXIT_OK


def _histogram_rows(histogram: ModalityHistogram) -> list[list]:
    edges = histogram.bin_edges
    totals = histogram.totals
    rows = []
    for i in range(len(totals)):
        at_least = sum(totals[i:])
        rows.append([edges[i], edges[i + 1], totals[i], histogram.with_polyp[i],
                     histogram.without_polyp[i], at_least])
    return rows


def cmd_project(args) -> int:
    config = _run_config(args)
    out = _out_dir(args)
    labeled = _load_labeled_sets(args.sets)

    matrices = []
    labels: list[str] = []
    rng = np.random.Generator(np.random.PCG64(config.seed))
    for label, emb in labeled:
        matrix = emb.matrix
        if args.sample and matrix.shape[0] > args.sample:
            rows = np.sort(rng.choice(matrix.shape[0], size=args.sample, replace=False))
            matrix = matrix[rows]
        matrices.append(matrix)
        labels.extend([label] * matrix.shape[0])
    combined = EmbeddingSet(np.vstack(matrices))

    if args.method == "pca":
        projection = pca_2d(combined, labels=labels)
    else:
        tsne_cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations,
                              learning_rate=args.learning_rate, seed=config.seed)
        projection = tsne_2d(combined, tsne_cfg, labels=labels)

    input_paths: list[str] = []
    for spec in args.sets:
        input_paths.extend(_spec_paths(spec))
    prov = provenance(config, input_paths)
    write_csv_report(
        out / "projection.csv",
        ["x", "y", "label"],
        [[float(x), float(y), lab]
         for (x, y), lab in zip(projection.points, projection.labels)],
        preamble=_csv_preamble(prov),
    )
    payload = {
        "provenance": prov,
        "method": args.method,
        "n_points": int(projection.points.shape[0]),
        "diagnostics": dict(projection.diagnostics),
    }
    write_json_report(out / "projection.json", payload)
    if config.figures:
        from .figures import scatter_figure

        scatter_figure(projection, out / f"projection.{config.fig_format}")
    diag = ", ".join(f"{k}={v:.4f}" for k, v in sorted(projection.diagnostics.items()))
    print(f"projected {projection.points.shape[0]} points with {args.method}"
          + (f" ({diag})" if diag else ""))
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args)
    scenario = SynthScenario.from_json(args.scenario)
    bundle = write_artifact_tree(scenario, out)
    if bundle is not None:
        print(f"wrote {len(bundle.videos)} videos, {len(bundle.tracks)} polyps to {out}")
    else:
        print(f"wrote embedding groups to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
