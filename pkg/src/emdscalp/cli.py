"""Command-line surface: prepare, train-eval, select-channels, emd, plot, report.

Configuration lives in a flat versioned ``key = value`` file (grammar in the
README); command-line flags override file keys.  All outputs are plain text
(CSV/JSON/SVG) and byte-deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import montage, relevance, signal, spdgeom, stats, transport

CONFIG_VERSION = 1
CHANNEL_CONFIGS = ("all64", "mi21", "feat21")


@dataclass(frozen=True)
class ExperimentConfig:
    version: int = CONFIG_VERSION
    dataset_root: str = "."
    subjects: tuple[int, ...] = ()
    runs: tuple[int, ...] = (3, 4, 7, 8, 11, 12)
    input_format: str = "edf"  # edf | csv
    sample_rate: float = 160.0  # csv input only; edf carries its own
    band_lo: float = 8.0
    band_hi: float = 30.0
    channel_config: str = "all64"  # all64 | mi21 | feat21
    relevance_source: str = "riemannian"  # riemannian | external:<name>
    relevance_pattern: str = ""  # path with {subject}, external sources
    class_mode: str = "pooled"  # pooled | per_class_union
    seed: int = 42
    test_fraction: float = 0.2
    shrinkage: float = 0.05
    target_k: int = 21
    metric: str = "euclidean"
    mass: str = "raw"
    layout: str = ""  # mapping file path; empty = packaged default
    cache_dir: str = "cache"
    output_dir: str = "out"

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        if self.channel_config not in CHANNEL_CONFIGS:
            raise ValueError(
                f"channel_config must be one of {CHANNEL_CONFIGS}, got {self.channel_config!r}"
            )
        external = self.relevance_source.startswith("external:")
        if not external and self.relevance_source != "riemannian":
            raise ValueError(f"unknown relevance_source {self.relevance_source!r}")
        if self.channel_config == "feat21" and external and not self.relevance_pattern:
            raise ValueError("feat21 with an external source requires relevance_pattern")


_TUPLE_INT = {"subjects", "runs"}
_FLOATS = {"sample_rate", "band_lo", "band_hi", "test_fraction", "shrinkage"}
_INTS = {"version", "seed", "target_k"}
_PATH_KEYS = {"dataset_root", "cache_dir", "output_dir", "layout", "relevance_pattern"}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat ``key = value`` grammar (``#`` comments, blank lines)."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw_line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path: str | Path | None, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    """Build a config from an optional file plus flag overrides."""
    values: dict[str, object] = {}
    base = Path(".")
    if path is not None:
        base = Path(path).resolve().parent
        raw = parse_config_text(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(ExperimentConfig)}
        for key, sval in raw.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if key in _TUPLE_INT:
                values[key] = tuple(int(v) for v in sval.split(",") if v.strip())
            elif key in _FLOATS:
                values[key] = float(sval)
            elif key in _INTS:
                values[key] = int(sval)
            else:
                values[key] = sval
    cfg = ExperimentConfig(**values)
    # relative paths resolve against the config file's directory
    resolved = {}
    for key in _PATH_KEYS:
        val = getattr(cfg, key)
        if val and not Path(val.split("{", 1)[0] or ".").is_absolute():
            resolved[key] = str(base / val)
    if resolved:
        cfg = replace(cfg, **resolved)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _load_layout(cfg: ExperimentConfig) -> montage.GridLayout:
    if cfg.layout:
        return montage.load_grid_layout_file(cfg.layout)
    return montage.default_layout()


# ---------------------------------------------------------------------------
# epoch cache

def _subject_tag(subject: int) -> str:
    return f"S{subject:03d}"


def write_epoch_cache(cache_dir: Path, subject: int, epochs: list[signal.Epoch],
                      channel_names: list[str], sample_rate: float) -> Path:
    subj_dir = cache_dir / _subject_tag(subject)
    subj_dir.mkdir(parents=True, exist_ok=True)
    n_samples = epochs[0].data.shape[1] if epochs else 0
    index = {
        "format_version": 1,
        "subject": subject,
        "n_epochs": len(epochs),
        "n_channels": len(channel_names),
        "n_samples": n_samples,
        "sample_rate": sample_rate,
        "channel_names": list(channel_names),
        "labels": [e.label for e in epochs],
        "trials": [e.trial for e in epochs],
        "slices": [e.slice_index for e in epochs],
    }
    (subj_dir / "index.json").write_text(
        json.dumps(index, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    lines = []
    for i, ep in enumerate(epochs):
        for c in range(ep.data.shape[0]):
            lines.append(f"{i},{c}," + ",".join(repr(float(v)) for v in ep.data[c]))
    (subj_dir / "epochs.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return subj_dir


def read_epoch_cache(cache_dir: Path, subject: int) -> tuple[list[signal.Epoch], dict]:
    subj_dir = cache_dir / _subject_tag(subject)
    index = json.loads((subj_dir / "index.json").read_text(encoding="utf-8"))
    if index.get("format_version") != 1:
        raise ValueError(f"unsupported cache format_version {index.get('format_version')}")
    n_epochs, n_channels, n_samples = index["n_epochs"], index["n_channels"], index["n_samples"]
    data = np.zeros((n_epochs, n_channels, n_samples))
    with open(subj_dir / "epochs.csv", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) < 3:
                continue
            e, c = int(parts[0]), int(parts[1])
            data[e, c] = [float(v) for v in parts[2:]]
    epochs = [
        signal.Epoch(
            data[i], index["labels"][i], subject=subject,
            trial=index["trials"][i], slice_index=index["slices"][i],
        )
        for i in range(n_epochs)
    ]
    return epochs, index


# ---------------------------------------------------------------------------
# channel selection plumbing

def _canonical_index(channel_names: list[str], layout: montage.GridLayout) -> dict[str, int]:
    out = {}
    for i, name in enumerate(channel_names):
        try:
            out[layout.resolve(name)] = i
        except KeyError:
            continue  # channels outside the montage cannot be addressed by name
    return out


def _subset_for_config(cfg: ExperimentConfig, layout: montage.GridLayout,
                       channel_names: list[str], subject: int,
                       train_covs: list[np.ndarray], train_labels: list[str],
                       ) -> tuple[list[int], spdgeom.SelectionTrace | None]:
    if cfg.channel_config == "all64":
        return list(range(len(channel_names))), None
    if cfg.channel_config == "mi21":
        lookup = _canonical_index(channel_names, layout)
        missing = [c for c in relevance.MI_BASELINE_CHANNELS if c not in lookup]
        if missing:
            raise ValueError(f"recording lacks baseline channels: {missing}")
        return sorted(lookup[c] for c in relevance.MI_BASELINE_CHANNELS), None
    # feat21
    if cfg.relevance_source == "riemannian":
        trace = spdgeom.backward_elimination(train_covs, train_labels, cfg.target_k)
        return sorted(trace.final_subset), trace
    scores = relevance.ingest_external(
        cfg.relevance_pattern.format(subject=subject), layout
    )
    selected = relevance.top_k(scores, cfg.target_k, class_mode=cfg.class_mode)
    lookup = _canonical_index(channel_names, layout)
    missing = [c for c in selected if c not in lookup]
    if missing:
        raise ValueError(f"relevance names not present in recording: {sorted(missing)}")
    return sorted(lookup[c] for c in selected), None


def _cohort_maps(counts: dict[str, int], layout: montage.GridLayout, k: int
                 ) -> tuple[montage.SpatialMap, montage.SpatialMap]:
    ranked = sorted(counts, key=lambda n: (-counts[n], layout.montage_rank(n)))
    top = ranked[:min(k, len(ranked))]
    weighted = montage.weighted_map({n: float(c) for n, c in counts.items()}, layout)
    return montage.binary_map(top, layout), weighted


# ---------------------------------------------------------------------------
# SVG rendering

def render_map_svg(smap: montage.SpatialMap, layout: montage.GridLayout,
                   cell: int = 40, margin: int = 20) -> str:
    """Deterministic SVG: one marker per montage electrode, scaled by mass."""
    if smap.n != layout.n:
        raise ValueError(f"map order {smap.n} does not match layout order {layout.n}")
    size = 2 * margin + layout.n * cell
    peak = float(smap.mass.max())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for e in layout.electrodes:
        cx = margin + (e.col + 0.5) * cell
        cy = margin + (e.row + 0.5) * cell
        m = float(smap.mass[e.row, e.col])
        rel = m / peak if peak > 0 else 0.0
        if m > 0:
            radius = 6.0 + 10.0 * rel
            opacity = 0.25 + 0.75 * rel
            parts.append(
                f'<circle class="active" cx="{cx:.2f}" cy="{cy:.2f}" r="{radius:.2f}" '
                f'fill="#1f6fb4" fill-opacity="{opacity:.3f}" stroke="#17375e"/>'
            )
        else:
            parts.append(
                f'<circle class="inactive" cx="{cx:.2f}" cy="{cy:.2f}" r="6.00" '
                f'fill="none" stroke="#9aa0a6"/>'
            )
        parts.append(
            f'<text x="{cx:.2f}" y="{cy + 3.0:.2f}" font-size="7" '
            f'text-anchor="middle" font-family="sans-serif">{e.name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# subcommands

def _run_path(cfg: ExperimentConfig, subject: int, run: int) -> Path:
    ext = "edf" if cfg.input_format == "edf" else "csv"
    tag = _subject_tag(subject)
    return Path(cfg.dataset_root) / tag / f"{tag}R{run:02d}.{ext}"


def cmd_prepare(cfg: ExperimentConfig) -> dict:
    if not cfg.subjects:
        raise ValueError("config lists no subjects")
    cache_dir = Path(cfg.cache_dir)
    missing: list[str] = []
    summary = {}
    for subject in sorted(cfg.subjects):
        epochs: list[signal.Epoch] = []
        channel_names: list[str] = []
        sample_rate = cfg.sample_rate
        for run in cfg.runs:
            path = _run_path(cfg, subject, run)
            if not path.exists():
                missing.append(str(path))
                continue
            if cfg.input_format == "edf":
                rec = signal.read_recording(path)
            else:
                ann = path.with_name(path.stem + "_annotations.csv")
                rec = signal.read_recording_csv(
                    path, ann if ann.exists() else None, sample_rate=cfg.sample_rate
                )
            rec = signal.bandpass(rec, cfg.band_lo, cfg.band_hi)
            offset = max((e.trial for e in epochs), default=-1) + 1
            epochs.extend(
                signal.epoch_trials(rec, subject=subject, trial_offset=offset)
            )
            channel_names = rec.channel_names
            sample_rate = rec.sample_rate
        if not epochs:
            missing.append(f"{_subject_tag(subject)}: no usable runs")
            continue
        write_epoch_cache(cache_dir, subject, epochs, channel_names, sample_rate)
        summary[_subject_tag(subject)] = len(epochs)
    if not summary:
        raise ValueError(f"no subjects could be prepared; missing: {missing}")
    report = {"cached": summary, "missing": sorted(missing)}
    if missing:
        print(json.dumps({"warning": "partial cohort", "missing": sorted(missing)}),
              file=sys.stderr)
    return report


def _train_eval_subject(cfg: ExperimentConfig, layout: montage.GridLayout,
                        cache_dir: Path, out_dir: Path, subject: int,
                        selections: dict[str, list[str]]) -> dict:
    epochs, index = read_epoch_cache(cache_dir, subject)
    train, test = signal.split(epochs, signal.SplitSpec(cfg.seed, cfg.test_fraction))
    train_covs = [spdgeom.covariance(e.data, cfg.shrinkage) for e in train]
    test_covs = [spdgeom.covariance(e.data, cfg.shrinkage) for e in test]
    train_labels = [e.label for e in train]
    test_labels = [e.label for e in test]
    channel_names = index["channel_names"]
    subset, trace = _subset_for_config(
        cfg, layout, channel_names, subject, train_covs, train_labels
    )
    classes = sorted(set(train_labels))
    model = spdgeom.mdm_fit(train_covs, train_labels, channel_subset=subset,
                            classes=classes)
    preds = [spdgeom.mdm_predict(model, spdgeom.restrict_channels(c, subset))
             for c in test_covs]
    ev = stats.evaluate(preds, test_labels, classes=classes)
    chance = stats.chance_level(test_labels, method="majority")
    row = {
        "subject": subject,
        "channel_config": cfg.channel_config,
        "relevance_source": cfg.relevance_source,
        "n_channels": len(subset),
        "n_train": len(train),
        "n_test": ev.n_test,
        "chance": chance,
        "overall": ev.overall,
        "overall_macro": ev.overall_macro,
    }
    for c in classes:
        row[f"recall_{c}"] = ev.per_class_recall[c]
        row[f"support_{c}"] = ev.support[c]
    if trace is not None:
        (out_dir / f"trace_{_subject_tag(subject)}.json").write_text(
            spdgeom.trace_to_json(trace) + "\n", encoding="utf-8"
        )
    if cfg.channel_config in ("feat21", "mi21"):
        lookup = {i: name for name, i in _canonical_index(channel_names, layout).items()}
        selections[_subject_tag(subject)] = sorted(
            lookup[i] for i in subset if i in lookup
        )
    return row


def cmd_train_eval(cfg: ExperimentConfig) -> dict:
    layout = _load_layout(cfg)
    cache_dir = Path(cfg.cache_dir)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    selections: dict[str, list[str]] = {}
    failed: dict[str, str] = {}
    for subject in sorted(cfg.subjects):
        # missing caches and convergence failures are reported; the run continues
        try:
            rows.append(_train_eval_subject(cfg, layout, cache_dir, out_dir,
                                            subject, selections))
        except (FileNotFoundError, spdgeom.FrechetMeanError, ValueError) as exc:
            failed[_subject_tag(subject)] = f"{type(exc).__name__}: {exc}"
    if not rows:
        raise ValueError(f"no subject completed train-eval; failures: {failed}")
    if failed:
        print(json.dumps({"warning": "subjects failed", "failed": failed}),
              file=sys.stderr)

    _write_rows(out_dir, rows)
    if cfg.channel_config == "feat21" and selections:
        agg = relevance.aggregate_cohort(selections)
        cohort = {
            "model": cfg.relevance_source,
            "subjects": list(agg.subjects),
            "selections": {s: selections[s] for s in agg.subjects},
            "counts": dict(sorted(agg.counts.items())),
        }
        tag = cfg.relevance_source.replace("external:", "")
        (out_dir / f"cohort_{tag}.json").write_text(
            json.dumps(cohort, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        bmap, wmap = _cohort_maps(agg.counts, layout, cfg.target_k)
        montage.save_spatial_map(bmap, out_dir / f"map_{tag}_binary_top{cfg.target_k}.csv")
        montage.save_spatial_map(wmap, out_dir / f"map_{tag}_weighted_counts.csv")
    return {"rows": len(rows), "failed_subjects": sorted(failed),
            "output_dir": str(out_dir)}


def _write_rows(out_dir: Path, rows: list[dict]) -> None:
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(c, "")) for c in columns))
    (out_dir / "rows.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "rows.json").write_text(
        json.dumps(rows, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_select_channels(cfg: ExperimentConfig) -> dict:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = _load_layout(cfg)
    cache_dir = Path(cfg.cache_dir)
    selections: dict[str, list[str]] = {}
    for subject in sorted(cfg.subjects):
        epochs, index = read_epoch_cache(cache_dir, subject)
        train, _ = signal.split(epochs, signal.SplitSpec(cfg.seed, cfg.test_fraction))
        covs = [spdgeom.covariance(e.data, cfg.shrinkage) for e in train]
        labels = [e.label for e in train]
        trace = spdgeom.backward_elimination(covs, labels, cfg.target_k)
        tag = _subject_tag(subject)
        (out_dir / f"trace_{tag}.json").write_text(
            spdgeom.trace_to_json(trace) + "\n", encoding="utf-8"
        )
        scores = relevance.scores_from_trace(trace, index["channel_names"], layout)
        selections[tag] = sorted(
            relevance.top_k(scores, min(cfg.target_k, len(scores.channels)))
        )
    agg = relevance.aggregate_cohort(selections)
    cohort = {
        "model": "riemannian",
        "subjects": list(agg.subjects),
        "selections": selections,
        "counts": dict(sorted(agg.counts.items())),
    }
    (out_dir / "cohort_riemannian.json").write_text(
        json.dumps(cohort, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return {"subjects": len(selections), "output_dir": str(out_dir)}


def cmd_emd(cfg: ExperimentConfig, map_args: list[str], cohort_args: list[str],
            baseline_map: str | None, rebalance_to: float) -> dict:
    layout = _load_layout(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if baseline_map:
        base_binary = montage.load_spatial_map(baseline_map)
    else:
        base_binary = relevance.mi_baseline(layout, "binary")
    base_weighted = relevance.mi_baseline(layout, "uniform-weighted") if not baseline_map \
        else base_binary

    def parse_named(args: list[str]) -> list[tuple[str, str]]:
        pairs = []
        for item in args:
            if "=" not in item:
                raise ValueError(f"expected NAME=PATH, got {item!r}")
            name, path = item.split("=", 1)
            pairs.append((name, path))
        return pairs

    results = []
    for name, path in parse_named(map_args):
        smap = montage.load_spatial_map(path)
        p, q = smap, base_binary
        if cfg.mass == "raw":
            p, q = transport.rebalance(p, q, rebalance_to)
        res = transport.emd(p, q, metric=cfg.metric, mass_mode=cfg.mass)
        results.append({"model": name, "emd_binary": res.distance, "emd_weighted": None})
    for name, path in parse_named(cohort_args):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        counts = {k: int(v) for k, v in doc["counts"].items()}
        bmap, wmap = _cohort_maps(counts, layout, cfg.target_k)
        pb, qb = bmap, base_binary
        pw, qw = wmap, base_weighted
        if cfg.mass == "raw":
            pb, qb = transport.rebalance(pb, qb, rebalance_to)
            pw, qw = transport.rebalance(pw, qw, rebalance_to)
        res_b = transport.emd(pb, qb, metric=cfg.metric, mass_mode=cfg.mass)
        res_w = transport.emd(pw, qw, metric=cfg.metric, mass_mode=cfg.mass)
        results.append(
            {"model": name, "emd_binary": res_b.distance, "emd_weighted": res_w.distance}
        )
    if not results:
        raise ValueError("no model maps given; use --maps and/or --cohorts")
    results.sort(key=lambda r: (r["emd_binary"], r["model"]))
    for rank, row in enumerate(results, start=1):
        row["rank"] = rank

    lines = ["model,rank,emd_binary,emd_weighted"]
    for row in results:
        ew = "" if row["emd_weighted"] is None else repr(row["emd_weighted"])
        lines.append(f'{row["model"]},{row["rank"]},{repr(row["emd_binary"])},{ew}')
    (out_dir / "emd_table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "emd_table.json").write_text(
        json.dumps(results, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return {"models": len(results), "output_dir": str(out_dir)}


def cmd_plot(cfg: ExperimentConfig, map_path: str, out_path: str) -> dict:
    layout = _load_layout(cfg)
    smap = montage.load_spatial_map(map_path)
    svg = render_map_svg(smap, layout)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    return {"out": str(out)}


def cmd_report(cfg: ExperimentConfig, row_files: list[str]) -> dict:
    rows: list[dict] = []
    for path in row_files:
        rows.extend(_read_rows_csv(Path(path)))
    if not rows:
        raise ValueError("no rows to report")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    configs = [c for c in CHANNEL_CONFIGS
               if any(r["channel_config"] == c for r in rows)]
    subjects = sorted({int(r["subject"]) for r in rows})
    cell: dict[tuple[int, str], dict] = {
        (int(r["subject"]), r["channel_config"]): r for r in rows
    }
    recall_cols = sorted(
        {k for r in rows for k in r if k.startswith("recall_")}
    )

    header = ["ID", "chance"]
    for c in configs:
        header.append(f"{c}_overall")
        header.extend(f"{c}_{rc.removeprefix('recall_')}" for rc in recall_cols)
    table: list[list[str]] = []
    numeric: dict[str, list[float]] = {h: [] for h in header[1:]}
    for s in subjects:
        first = next(cell[(s, c)] for c in configs if (s, c) in cell)
        line = [str(s), f"{100 * float(first['chance']):.2f}"]
        numeric["chance"].append(100 * float(first["chance"]))
        for c in configs:
            r = cell.get((s, c))
            for col, key in [(f"{c}_overall", "overall")] + [
                (f"{c}_{rc.removeprefix('recall_')}", rc) for rc in recall_cols
            ]:
                if r is None or key not in r:
                    line.append("")
                else:
                    val = 100 * float(r[key])
                    line.append(f"{val:.2f}")
                    numeric[col].append(val)
        table.append(line)

    footer = ["Mean±SD"]
    summary = {}
    for col in header[1:]:
        vals = numeric[col]
        if vals:
            mean, sd = stats.cohort_summary(vals)
            footer.append(f"{mean:.2f}±{sd:.2f}")
            summary[col] = [mean, sd]
        else:
            footer.append("")
    lines = [",".join(header)] + [",".join(t) for t in table] + [",".join(footer)]
    (out_dir / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # pairwise signed-rank p-values across configurations, on overall columns
    pvalues: dict[str, dict[str, float | None]] = {}
    for c1 in configs:
        pvalues[c1] = {}
        for c2 in configs:
            if c1 == c2:
                pvalues[c1][c2] = 1.0
                continue
            paired = [
                (float(cell[(s, c1)]["overall"]), float(cell[(s, c2)]["overall"]))
                for s in subjects if (s, c1) in cell and (s, c2) in cell
            ]
            try:
                res = stats.wilcoxon_signed_rank(
                    [p[0] for p in paired], [p[1] for p in paired]
                )
                pvalues[c1][c2] = res.p_value
            except ValueError:
                pvalues[c1][c2] = None
    plines = ["," + ",".join(configs)]
    for c1 in configs:
        cells = [
            "" if pvalues[c1][c2] is None else repr(pvalues[c1][c2]) for c2 in configs
        ]
        plines.append(c1 + "," + ",".join(cells))
    (out_dir / "pvalues.csv").write_text("\n".join(plines) + "\n", encoding="utf-8")

    report = {"configs": configs, "subjects": subjects, "summary": summary,
              "pvalues": pvalues}
    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return {"output_dir": str(out_dir), "subjects": len(subjects)}


def _read_rows_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line.strip()]


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--metric", choices=["euclidean", "manhattan"],
                   help="override ground metric")
    p.add_argument("--mass", choices=["raw", "normalized"],
                   help="override mass mode")
    p.add_argument("--output-dir", help="override output directory")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "metric": args.metric,
        "mass": args.mass,
        "output_dir": args.output_dir,
    }
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emdscalp",
        description="EEG channel-relevance pipeline with exact earth mover's "
                    "distance agreement scoring",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare", help="ingest recordings into the epoch cache")
    _add_common(p)
    p.set_defaults(func=lambda a: cmd_prepare(_config_from_args(a)))

    p = sub.add_parser("train-eval", help="train and evaluate the covariance classifier")
    _add_common(p)
    p.set_defaults(func=lambda a: cmd_train_eval(_config_from_args(a)))

    p = sub.add_parser("select-channels", help="run backward-elimination channel selection")
    _add_common(p)
    p.set_defaults(func=lambda a: cmd_select_channels(_config_from_args(a)))

    p = sub.add_parser("emd", help="compare relevance maps against the baseline")
    _add_common(p)
    p.add_argument("--maps", nargs="*", default=[], metavar="NAME=CSV",
                   help="spatial-map CSV files to compare")
    p.add_argument("--cohorts", nargs="*", default=[], metavar="NAME=JSON",
                   help="cohort aggregate JSON files to compare")
    p.add_argument("--baseline-map", help="spatial-map CSV replacing the built-in baseline")
    p.add_argument("--rebalance-to", type=float, default=21.0,
                   help="common total mass in raw mode")
    p.set_defaults(func=lambda a: cmd_emd(
        _config_from_args(a), a.maps, a.cohorts, a.baseline_map, a.rebalance_to))

    p = sub.add_parser("plot", help="render a spatial map as SVG")
    _add_common(p)
    p.add_argument("--map", required=True, help="spatial-map CSV")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=lambda a: cmd_plot(_config_from_args(a), a.map, a.out))

    p = sub.add_parser("report", help="tabulate rows with cohort summary and p-values")
    _add_common(p)
    p.add_argument("--rows", nargs="+", required=True, help="rows.csv file(s)")
    p.set_defaults(func=lambda a: cmd_report(_config_from_args(a), a.rows))

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        result = args.func(args)
    except Exception as exc:  # contract: nonzero exit, JSON error on stderr
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
