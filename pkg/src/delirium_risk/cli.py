"""Command-line driver: one subcommand per pipeline stage, plus ``report``.

Exit codes: 0 success, 1 computation error, 2 usage or input error.
Artifacts written by a failing command are removed before exiting.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import build_cohort, cohort_flow, cohort_summary, format_summary, load_criteria
from .comorbidity import CONDITIONS, comorbidity_flags, load_charlson_map, profile
from .crossval import PipelineConfig, inner_split, kfold_cv, leakage_audit
from .ehr import EHRError, load_dataset, write_dataset
from .evaluation import pr_curve, roc_curve
from .features import (FEATURE_NAMES, N_FEATURES, FeatureSequence, build_sequences, flatten, resample,
                       to_arrays, unflatten)
from .lstm import TrainConfig, save_checkpoint, train
from .plots import km_svg, roc_svg, write_svg
from .stats import TABLE_COLUMNS, comorbidity_table
from .survival import NotTestableError, km_fit, logrank_test, to_survival
from .syngen import SynthConfig, generate, write_ground_truth

log = logging.getLogger("delirium_risk")

INPUT_FILES = ("patients.csv", "admissions.csv", "diagnoses.csv")


class InputError(Exception):
    """Bad configuration, flags or input files (exit code 2)."""


# ---------------------------------------------------------------- config

def _synth_defaults() -> dict:
    d = SynthConfig().to_dict()
    d.pop("onset")
    return d


def _train_defaults() -> dict:
    d = dataclasses.asdict(TrainConfig())
    d.pop("seed")
    return d


DEFAULTS = {
    "run": {"seed": 0, "threads": 1},
    "paths": {"data_dir": "", "criteria": "", "charlson": ""},
    "cohort": {"min_age": 65, "study_end": ""},
    "km": {"population": "full", "transform": "loglog", "level": 0.95},
    "features": {"max_seq_len": 8},
    "resample": {"k": 5, "minority_ratio": 0.5, "majority_ratio": 1.0},
    "train": _train_defaults(),
    "eval": {"folds": 10, "n_boot": 1000, "level": 0.95, "inner_val_fraction": 0.1},
    "synth": _synth_defaults(),
}

# settings that cannot change any number in any artifact
_UNHASHED = {("run", "threads"), ("paths", "data_dir")}


def _coerce(section: str, key: str, raw):
    if section not in DEFAULTS or key not in DEFAULTS[section]:
        raise InputError(f"unknown config key {section}.{key}")
    default = DEFAULTS[section][key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if key == "early_stopping_patience":
            return None if text.lower() in ("none", "") else int(text)
        if isinstance(default, bool):
            if text.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise InputError(f"bad value for {section}.{key}: {raw!r}") from None
    return text


def load_config(path: str | None, overrides: list[tuple[str, str, object]]) -> dict:
    """Defaults, then the INI file, then command-line overrides."""
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    if path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"missing config file: {p}")
        parser = configparser.ConfigParser()
        try:
            parser.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise InputError(f"{p}: {exc}") from None
        for section in parser.sections():
            if section not in DEFAULTS:
                raise InputError(f"{p}: unknown config section [{section}]")
            for key, value in parser[section].items():
                cfg[section][key] = _coerce(section, key, value)
    for section, key, value in overrides:
        cfg[section][key] = _coerce(section, key, value)
    return cfg


def config_hash(cfg: dict) -> str:
    slim = {s: {k: v for k, v in vals.items() if (s, k) not in _UNHASHED} for s, vals in cfg.items()}
    blob = json.dumps(slim, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- artifacts

class Run:
    """Resolved config plus bookkeeping of every file written by this command."""

    def __init__(self, cfg: dict, out: Path, seed: int | None = None):
        self.cfg = cfg
        self.out = out
        self.seed = cfg["run"]["seed"] if seed is None else seed
        self.written: list[Path] = []

    @property
    def provenance(self) -> dict:
        return {"version": __version__, "seed": self.seed, "config_hash": config_hash(self.cfg)}

    @property
    def provenance_line(self) -> str:
        return "provenance " + json.dumps(self.provenance, sort_keys=True)

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps({"provenance": self.provenance, **payload}, indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.provenance_line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def read_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise InputError(f"missing input file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def read_json(path: Path) -> dict:
    if not path.is_file():
        raise InputError(f"missing input file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _num(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- shared loading

def _data_dir(run: Run) -> Path:
    return Path(run.cfg["paths"]["data_dir"] or run.out)


def _load(run: Run):
    d = _data_dir(run)
    paths = [d / name for name in INPUT_FILES]
    dataset = load_dataset(*paths, provenance=str(d))
    min_age = run.cfg["cohort"]["min_age"]
    criteria = load_criteria(run.cfg["paths"]["criteria"] or None, min_age=min_age)
    cmap = load_charlson_map(run.cfg["paths"]["charlson"] or None)
    return dataset, criteria, cmap


def _study_end(run: Run) -> dt.date | None:
    text = run.cfg["cohort"]["study_end"]
    if not text:
        return None
    try:
        return dt.date.fromisoformat(text[:10])
    except ValueError:
        raise InputError(f"bad cohort.study_end {text!r}") from None


def _pipeline_config(run: Run) -> PipelineConfig:
    c = run.cfg
    tcfg = TrainConfig(**c["train"])
    return PipelineConfig(
        max_seq_len=c["features"]["max_seq_len"], smote_k=c["resample"]["k"],
        minority_ratio=c["resample"]["minority_ratio"], majority_ratio=c["resample"]["majority_ratio"],
        inner_val_fraction=c["eval"]["inner_val_fraction"], folds=c["eval"]["folds"],
        n_boot=c["eval"]["n_boot"], level=c["eval"]["level"], train=tcfg,
    )


# ---------------------------------------------------------------- stages

def cmd_synth(run: Run) -> dict:
    s = dict(run.cfg["synth"])
    s["start"] = dt.date.fromisoformat(s["start"])
    s["end"] = dt.date.fromisoformat(s["end"])
    sc = SynthConfig(**s)
    run.seed = sc.seed
    dataset, truth = generate(sc)
    for name in INPUT_FILES:
        run.path(name)
    write_dataset(dataset, run.out, header_comment=run.provenance_line)
    write_ground_truth(truth, run.path("ground_truth.csv"), header_comment=run.provenance_line)
    return {"n_patients": len(dataset), "n_delirium": sum(g.label for g in truth)}


def cmd_ingest(run: Run) -> dict:
    dataset, _, _ = _load(run)
    n_adm = sum(len(p.admissions) for p in dataset)
    n_dx = sum(a.dx_count for p in dataset for a in p.admissions)
    info = {"n_patients": len(dataset), "n_admissions": n_adm, "n_diagnoses": n_dx,
            "source": str(_data_dir(run))}
    run.write_json("ingest.json", info)
    return info


def cmd_cohort(run: Run) -> dict:
    dataset, criteria, _ = _load(run)
    assignments = build_cohort(dataset, criteria)
    flow = cohort_flow(assignments)
    summary = cohort_summary(assignments, dataset)
    run.write_json("cohort_flow.json", flow)
    run.write_json("cohort_summary.json", summary)
    run.write_csv("cohort.csv", ("subject_id", "excluded", "is_mci", "has_delirium", "exclusion_reasons"), [
        (a.subject_id, int(a.excluded), int(a.is_mci), int(a.has_delirium), ";".join(a.exclusion_reasons))
        for a in assignments])
    print(format_summary(summary), end="")
    return flow


def cmd_comorbidity(run: Run) -> dict:
    dataset, criteria, cmap = _load(run)
    assignments = build_cohort(dataset, criteria)
    patients = dataset.by_id()
    rows = []
    for a in assignments:
        if a.included:
            rows.append([a.subject_id, *profile(patients[a.subject_id].history(), cmap).as_row()])
    run.write_csv("comorbidity.csv", ("subject_id", *CONDITIONS, "cci"), rows)
    return {"n": len(rows)}


def cmd_comorbidity_stats(run: Run) -> dict:
    dataset, criteria, cmap = _load(run)
    assignments = [a for a in build_cohort(dataset, criteria) if a.included]
    patients = dataset.by_id()
    flags = {a.subject_id: comorbidity_flags(patients[a.subject_id].history(), cmap) for a in assignments}
    level = run.cfg["eval"]["level"]
    contrasts = {
        "mci": ([a for a in assignments if a.is_mci], [a for a in assignments if not a.is_mci]),
        "delirium": ([a for a in assignments if a.is_mci and a.has_delirium],
                     [a for a in assignments if not a.is_mci and a.has_delirium]),
    }
    out = {}
    for name, (g1, g2) in contrasts.items():
        if not g1 or not g2:
            raise ValueError(f"comorbidity contrast '{name}' has an empty group "
                             f"({len(g1)} vs {len(g2)} patients)")
        table = comorbidity_table([flags[a.subject_id] for a in g1], [flags[a.subject_id] for a in g2],
                                  CONDITIONS, level)
        run.write_csv(f"comorbidity_stats_{name}.csv", TABLE_COLUMNS, [r.as_csv() for r in table])
        out[name] = {"group1_n": len(g1), "group2_n": len(g2),
                     "significant": [r.condition for r in table if r.p_value is not None and r.p_value < 0.05]}
    return out


KM_COLUMNS = ("time_months", "n_at_risk", "n_events", "survival", "var", "ci_lo", "ci_hi")


def cmd_km(run: Run) -> dict:
    dataset, criteria, _ = _load(run)
    kcfg = run.cfg["km"]
    if kcfg["population"] not in ("full", "delirium"):
        raise InputError(f"km.population must be 'full' or 'delirium', got {kcfg['population']!r}")
    assignments = [a for a in build_cohort(dataset, criteria) if a.included]
    if kcfg["population"] == "delirium":
        assignments = [a for a in assignments if a.has_delirium]
    end = _study_end(run)
    groups = {
        "mci": [to_survival(a, end) for a in assignments if a.is_mci],
        "non_mci": [to_survival(a, end) for a in assignments if not a.is_mci],
    }
    curves = {}
    for name, obs in groups.items():
        if not obs:
            raise ValueError(f"survival group '{name}' is empty")
        c = km_fit(obs, kcfg["level"], kcfg["transform"])
        curves[name] = c
        run.write_csv(f"km_curve_{name}.csv", KM_COLUMNS, [
            (_num(t), int(n), int(d), _num(s), _num(v), _num(lo), _num(hi)) for t, n, d, s, v, lo, hi in c.rows()])
    try:
        lr = logrank_test(groups["mci"], groups["non_mci"])
        result = {"statistic": lr.statistic, "p_value": lr.p_value,
                  "observed": list(lr.observed), "expected": list(lr.expected), "testable": True}
    except NotTestableError as exc:
        result = {"statistic": None, "p_value": None, "testable": False, "reason": str(exc)}
    result["population"] = kcfg["population"]
    result["n"] = {k: len(v) for k, v in groups.items()}
    result["zero_duration_events"] = {k: sum(o.event and o.duration == 0 for o in v) for k, v in groups.items()}
    run.write_json("logrank.json", result)
    svg = km_svg({"MCI": curves["mci"], "No MCI": curves["non_mci"]}, comment=run.provenance_line)
    write_svg(svg, run.path("km.svg"))
    return result


FEATURE_COLUMNS = ("subject_id", "step_idx", "is_pad", *FEATURE_NAMES, "label")


def cmd_features(run: Run) -> dict:
    dataset, criteria, cmap = _load(run)
    T = run.cfg["features"]["max_seq_len"]
    seqs = build_sequences(dataset, build_cohort(dataset, criteria), cmap, criteria, T)
    rows = []
    for s in seqs:
        grid = s.padded(T)
        for t in range(T):
            pad = t < T - s.mask_len
            rows.append([s.subject_id, t, int(pad), *(_num(v) for v in grid[t]), int(s.label)])
    run.write_csv("features.csv", FEATURE_COLUMNS, rows)
    return {"n_sequences": len(seqs), "n_positive": sum(s.label for s in seqs), "max_seq_len": T}


def read_features(path: Path) -> tuple[list[FeatureSequence], int]:
    """Parse ``features.csv`` back into sequences; returns (sequences, max_seq_len)."""
    rows = read_csv(path)
    if rows and set(FEATURE_COLUMNS) - set(rows[0]):
        raise InputError(f"{path}: missing columns {sorted(set(FEATURE_COLUMNS) - set(rows[0]))}")
    by_id: dict[str, list] = {}
    labels: dict[str, bool] = {}
    order = []
    for r in rows:
        sid = r["subject_id"]
        if sid not in by_id:
            by_id[sid] = []
            order.append(sid)
        labels[sid] = r["label"] == "1"
        by_id[sid].append((int(r["step_idx"]), r["is_pad"] == "1", [float(r[c]) for c in FEATURE_NAMES]))
    if not order:
        raise InputError(f"{path}: no sequences")
    T = len(by_id[order[0]])
    seqs = []
    for sid in order:
        steps = sorted(by_id[sid])
        if len(steps) != T:
            raise InputError(f"{path}: subject {sid} has {len(steps)} steps, expected {T}")
        real = np.array([v for _, pad, v in steps if not pad]).reshape(-1, N_FEATURES)
        seqs.append(FeatureSequence(sid, real, labels[sid]))
    return seqs, T


def _features_for(run: Run) -> tuple[list[FeatureSequence], int]:
    path = run.out / "features.csv"
    if not path.is_file():
        raise InputError(f"missing input file: {path} (run the 'features' stage first)")
    seqs, T = read_features(path)
    if T != run.cfg["features"]["max_seq_len"]:
        raise InputError(f"{path} was built with max_seq_len={T}, config says {run.cfg['features']['max_seq_len']}")
    return seqs, T


def cmd_train(run: Run) -> dict:
    seqs, T = _features_for(run)
    pc = _pipeline_config(run)
    root = np.random.SeedSequence(run.seed)
    split_ss, resample_ss, train_ss = root.spawn(3)
    labels = np.array([s.label for s in seqs], dtype=bool)
    fit_idx, stop_idx = inner_split(labels, pc.inner_val_fraction, split_ss)
    flat = [flatten(seqs[i], T) for i in fit_idx]
    balanced = resample(flat, pc.smote_k, pc.minority_ratio, pc.majority_ratio, resample_ss)
    tcfg = dataclasses.replace(pc.train, seed=train_ss)
    params, history = train(to_arrays([unflatten(s) for s in balanced], T),
                            to_arrays([seqs[i] for i in stop_idx], T), tcfg)
    save_checkpoint(run.path("model.ckpt"), params, {**run.provenance, "max_seq_len": T})
    run.write_json("history.json", history.to_dict())
    return {"selected_epoch": history.selected_epoch, "n_train": len(balanced)}


def cmd_evaluate(run: Run) -> dict:
    seqs, _ = _features_for(run)
    report = kfold_cv(seqs, _pipeline_config(run), master_seed=run.seed, threads=run.cfg["run"]["threads"])
    payload = report.to_dict()
    payload["leakage_audit_passed"] = leakage_audit(report)
    run.write_json("metrics.json", payload)
    fpr, tpr, thr = roc_curve(report.oof_scores, report.labels)
    run.write_csv("roc_points.csv", ("fpr", "tpr", "threshold"), zip(map(_num, fpr), map(_num, tpr), map(_num, thr)))
    rec, prec, pthr = pr_curve(report.oof_scores, report.labels)
    run.write_csv("pr_points.csv", ("recall", "precision", "threshold"),
                  zip(map(_num, rec), map(_num, prec), map(_num, pthr)))
    run.write_csv("predictions.csv", ("subject_id", "fold", "score", "label"), [
        (sid, int(f), _num(s), int(y))
        for sid, f, s, y in zip(report.subject_ids, report.fold_ids, report.oof_scores, report.labels)])
    write_svg(roc_svg(fpr, tpr, report.auroc, comment=run.provenance_line), run.path("roc.svg"))
    return {k: payload[k] for k in ("auroc", "auprc", "brier")}


# ---------------------------------------------------------------- report

STAGE_ARTIFACTS = {
    "cohort": ("cohort_flow.json", "cohort_summary.json"),
    "comorbidity-stats": ("comorbidity_stats_mci.csv", "comorbidity_stats_delirium.csv"),
    "km": ("km_curve_mci.csv", "km_curve_non_mci.csv", "logrank.json", "km.svg"),
    "features": ("features.csv",),
    "evaluate": ("metrics.json", "roc_points.csv", "pr_points.csv", "roc.svg"),
}


def _fmt_ci(point, ci, digits=2) -> str:
    return f"{point:.{digits}f} (95% CI: {ci[0]:.{digits}f}-{ci[1]:.{digits}f})"


def _km_points(rows: list[dict], months=(6, 12, 24)) -> dict:
    out = {}
    for m in months:
        s, lo, hi = 1.0, 1.0, 1.0
        for r in rows:
            if float(r["time_months"]) <= m:
                s, lo, hi = float(r["survival"]), float(r["ci_lo"]), float(r["ci_hi"])
        out[str(m)] = {"survival": s, "ci_lo": lo, "ci_hi": hi,
                       "text": f"{100 * s:.2f}% (95% CI: {100 * lo:.2f}-{100 * hi:.2f})"}
    return out


def cmd_report(run: Run) -> dict:
    ran = []
    for stage, names in STAGE_ARTIFACTS.items():
        if all((run.out / n).is_file() for n in names):
            continue
        sub = Run(run.cfg, run.out, run.seed)
        try:
            COMMANDS[stage](sub)
        except BaseException:
            sub.cleanup()
            raise
        ran.append(stage)
    if ran:
        log.info("report: generated missing stages %s", ", ".join(ran))

    def table(name):
        return [{k: r[k] for k in TABLE_COLUMNS} for r in read_csv(run.out / name)]

    metrics = read_json(run.out / "metrics.json")
    summary = {
        "cohort_flow": read_json(run.out / "cohort_flow.json"),
        "demographics": read_json(run.out / "cohort_summary.json"),
        "comorbidity_stats": {"mci": table("comorbidity_stats_mci.csv"),
                              "delirium": table("comorbidity_stats_delirium.csv")},
        "survival": {
            "logrank": read_json(run.out / "logrank.json"),
            "mci": _km_points(read_csv(run.out / "km_curve_mci.csv")),
            "non_mci": _km_points(read_csv(run.out / "km_curve_non_mci.csv")),
        },
        "metrics": {
            "auroc": _fmt_ci(metrics["auroc"], metrics["auroc_ci"]),
            "auprc": _fmt_ci(metrics["auprc"], metrics["auprc_ci"]),
            "brier": f"{metrics['brier']:.3f}",
            "raw": {k: metrics[k] for k in ("auroc", "auroc_ci", "auprc", "auprc_ci", "brier", "brier_ci")},
        },
        "stage_provenance": {
            name: read_json(run.out / name)["provenance"]
            for name in ("cohort_flow.json", "logrank.json", "metrics.json")
        },
    }
    run.write_json("summary.json", summary)
    m = summary["metrics"]
    print(f"AUROC {m['auroc']}\nAUPRC {m['auprc']}\nBrier {m['brier']}")
    return {"generated": ran}


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "cohort": cmd_cohort,
    "comorbidity": cmd_comorbidity,
    "comorbidity-stats": cmd_comorbidity_stats,
    "km": cmd_km,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ---------------------------------------------------------------- argv

def _setting(text: str) -> tuple[str, str, str]:
    key, sep, value = text.partition("=")
    section, dot, name = key.partition(".")
    if not sep or not dot:
        raise argparse.ArgumentTypeError(f"expected SECTION.KEY=VALUE, got {text!r}")
    return section.strip(), name.strip(), value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delirium-risk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; command-line flags take precedence")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--data-dir", help="directory with the three input CSVs (default: --out)")
    common.add_argument("--seed", type=int, help="master seed (for synth: the generator seed)")
    common.add_argument("--threads", type=int, help="worker processes for cross-validation folds")
    common.add_argument("--set", dest="settings", action="append", type=_setting, default=[],
                        metavar="SECTION.KEY=VALUE", help="override any config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "synth": "write a synthetic dataset and its ground-truth risk table",
        "ingest": "load and validate the three input files",
        "cohort": "apply the selection criteria; write flow and demographics",
        "comorbidity": "per-patient Charlson flags and index",
        "comorbidity-stats": "group prevalences with Wald CIs and chi-square tests",
        "km": "Kaplan-Meier curves, bands and log-rank test (MCI vs no MCI)",
        "features": "per-admission feature sequences",
        "train": "fit one LSTM on all sequences and save a checkpoint",
        "evaluate": "k-fold cross-validated metrics, ROC/PR points and ROC plot",
        "report": "aggregate all stage artifacts into summary.json",
    }
    subs = {}
    for name, text in helps.items():
        subs[name] = sub.add_parser(name, parents=[common], help=text, description=text)
    subs["synth"].add_argument("--n-patients", type=int)
    subs["km"].add_argument("--population", choices=("full", "delirium"))
    subs["km"].add_argument("--transform", choices=("linear", "loglog"))
    subs["km"].add_argument("--study-end", help="censoring date YYYY-MM-DD")
    for name in ("evaluate", "report"):
        subs[name].add_argument("--folds", type=int)
    for name in ("train", "evaluate", "report"):
        subs[name].add_argument("--epochs", type=int)
    return parser


def _overrides(args) -> list[tuple[str, str, object]]:
    out = list(args.settings)
    if args.data_dir:
        out.append(("paths", "data_dir", args.data_dir))
    if args.threads is not None:
        out.append(("run", "threads", args.threads))
    if args.seed is not None:
        out.append(("synth", "seed", args.seed) if args.command == "synth" else ("run", "seed", args.seed))
    flag_map = {"n_patients": ("synth", "n_patients"), "population": ("km", "population"),
                "transform": ("km", "transform"), "study_end": ("cohort", "study_end"),
                "folds": ("eval", "folds"), "epochs": ("train", "epochs")}
    for attr, (section, key) in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append((section, key, value))
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        cfg = load_config(args.config, _overrides(args))
        if cfg["run"]["threads"] < 1:
            raise InputError("--threads must be >= 1")
        run = Run(cfg, Path(args.out))
        result = COMMANDS[args.command](run)
    except (InputError, FileNotFoundError, EHRError) as exc:
        if run:
            run.cleanup()
        print(f"delirium-risk {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        if run:
            run.cleanup()
        return 130
    except Exception as exc:  # any computation failure
        if run:
            run.cleanup()
        print(f"delirium-risk {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, **_jsonable(result)}, sort_keys=True))
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


if __name__ == "__main__":
    sys.exit(main())
