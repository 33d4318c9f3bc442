"""End-to-end experiment stages operating on one output directory.

Artifacts (relative to ``out``)::

    corpus/{benign,malicious}/<id>.cfg, corpus/manifest.json   gen-corpus
    features.csv                                                 extract
    split.json normalizer.json model.json train_log.csv metrics.json   train
    osaa_results.csv osaa_outcomes.jsonl                         attack-osaa
    gea_results.csv gea_outcomes.jsonl                           attack-gea
    density_results.csv density_outcomes.jsonl                   density-sweep
    report.md                                                    report
    manifests/<stage>.json                                       every stage
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .attacks import run_attack_suite
from .classifier import Model, evaluate, train
from .config import RunConfig
from .corpus import CorpusError, generate_corpus, load_corpus, split, write_corpus
from .features import (Normalizer, extract_features, extract_many, fit_normalizer,
                       read_features_csv, write_features_csv)
from .gea import InvariantViolation, density_experiment, gea_attack, select_target
from .graph import Label

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4

# artifact -> stage that produces it
PRODUCERS = {
    "corpus": "gen-corpus",
    "features.csv": "extract",
    "split.json": "train",
    "normalizer.json": "train",
    "model.json": "train",
    "metrics.json": "train",
    "osaa_results.csv": "attack-osaa",
    "gea_results.csv": "attack-gea",
    "density_results.csv": "density-sweep",
}


class PipelineError(Exception):
    exit_code = EXIT_DATA


class MissingArtifact(PipelineError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        stages = sorted({PRODUCERS[m] for m in missing}, key=list(PRODUCERS.values()).index)
        super().__init__("missing " + ", ".join(missing) + "; run " +
                         ", ".join(f"`{s}`" for s in stages) + " first")


class InvariantFailure(PipelineError):
    exit_code = EXIT_INVARIANT


def _require(out: Path, *names: str) -> None:
    missing = [n for n in names if not (out / n).exists()]
    if missing:
        raise MissingArtifact(missing)


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Stage:
    """Context manager that times a stage and writes its run manifest."""

    def __init__(self, name: str, out: Path, cfg: RunConfig, config_path: Optional[str], inputs=()):
        self.name, self.out, self.cfg = name, Path(out), cfg
        self.config_path, self.inputs = config_path, list(inputs)
        self.outputs: list[str] = []

    @property
    def manifest_ref(self) -> str:
        return f"manifests/{self.name}.json"

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = datetime.now(timezone.utc).isoformat()
        self.t0 = time.perf_counter()
        return self

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.outputs.append(name)
        return path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            return False
        manifest = {
            "subcommand": self.name,
            "config": self.config_path,
            "seed": self.cfg.seed,
            "inputs": self.inputs,
            "outputs": {n: sha256(self.out / n) for n in self.outputs if (self.out / n).is_file()},
            "tool_version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "elapsed_s": time.perf_counter() - self.t0,
        }
        path = self.out / self.manifest_ref
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=1) + "\n")
        return False


def _jsonl(records, manifest_ref: str) -> str:
    return "".join(json.dumps({**r, "manifest": manifest_ref}) + "\n" for r in records)


def gen_corpus(out, cfg: RunConfig, config_path=None) -> None:
    out = Path(out)
    with Stage("gen-corpus", out, cfg, config_path) as st:
        try:
            graphs = generate_corpus(cfg.corpus)
        except AssertionError as exc:
            raise InvariantFailure(str(exc)) from None
        write_corpus(graphs, out / "corpus", cfg.corpus)
        st.outputs.append("corpus/manifest.json")


def _load_graphs(out: Path):
    _require(out, "corpus")
    try:
        return load_corpus(out / "corpus")
    except CorpusError as exc:
        raise PipelineError(str(exc)) from None


def extract(out, cfg: RunConfig, config_path=None, threads: int = 1) -> None:
    out = Path(out)
    graphs = _load_graphs(out)
    with Stage("extract", out, cfg, config_path, ["corpus"]) as st:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                X = np.array(list(pool.map(extract_features, graphs, chunksize=16)))
        else:
            X = extract_many(graphs)
        if not np.all(np.isfinite(X)):
            raise InvariantFailure("non-finite feature value")
        write_features_csv(out / "features.csv", [g.name for g in graphs], [g.label for g in graphs], X)
        st.outputs.append("features.csv")


def _load_features(out: Path):
    _require(out, "features.csv")
    try:
        ids, labels, X = read_features_csv(out / "features.csv")
    except (ValueError, IndexError) as exc:
        raise PipelineError(f"features.csv: {exc}") from None
    return ids, np.array([int(l) for l in labels]), X


def train_stage(out, cfg: RunConfig, config_path=None) -> None:
    out = Path(out)
    ids, y, X = _load_features(out)
    with Stage("train", out, cfg, config_path, ["features.csv"]) as st:
        try:
            tr, te = split(y, cfg.split_ratio, cfg.seed)
        except CorpusError as exc:
            raise PipelineError(str(exc)) from None
        st.write("split.json", json.dumps({"seed": cfg.seed, "ratio": cfg.split_ratio,
                                           "train": [ids[i] for i in tr], "test": [ids[i] for i in te],
                                           "manifest": st.manifest_ref}, indent=0) + "\n")
        norm = fit_normalizer(X[tr])
        st.write("normalizer.json", norm.to_json())
        Xn = norm(X)
        model, log = train(Xn[tr], y[tr], cfg.train)
        model.normalizer_ref = {"path": "normalizer.json", "sha256": sha256(out / "normalizer.json"),
                                "manifest": st.manifest_ref}
        st.write("model.json", model.to_json())
        st.write("train_log.csv", log.to_csv())
        metrics = evaluate(model, Xn[te], y[te]).to_dict()
        metrics.update({"test_samples": int(len(te)), "train_samples": int(len(tr)),
                        "manifest": st.manifest_ref})
        st.write("metrics.json", json.dumps(metrics, indent=1) + "\n")


def load_model(out: Path) -> tuple[Model, Normalizer]:
    _require(out, "model.json", "normalizer.json")
    norm = Normalizer.from_json((out / "normalizer.json").read_text())
    model = Model.from_json((out / "model.json").read_text())
    return model, norm


def load_split(out: Path) -> dict:
    _require(out, "split.json")
    return json.loads((out / "split.json").read_text())


def attack_osaa(out, cfg: RunConfig, config_path=None, threads: int = 1) -> None:
    out = Path(out)
    _require(out, "features.csv", "model.json", "normalizer.json", "split.json")
    ids, y, X = _load_features(out)
    model, norm = load_model(out)
    test = set(load_split(out)["test"])
    rows = [i for i, sid in enumerate(ids) if sid in test and y[i] == int(Label.MALICIOUS)]
    with Stage("attack-osaa", out, cfg, config_path, ["features.csv", "model.json", "split.json"]) as st:
        res = run_attack_suite(model, norm(X[rows]), y[rows], cfg.attack_configs(),
                               ids=[ids[i] for i in rows], threads=threads)
        st.write("osaa_results.csv", res.to_csv())
        recs = [o.to_dict() for outs in res.outcomes.values() for o in outs]
        st.write("osaa_outcomes.jsonl", _jsonl(recs, st.manifest_ref))


def _directions(graphs, test_ids):
    test = [g for g in graphs if g.name in test_ids]
    for name, src in (("Mal2Ben", Label.MALICIOUS), ("Ben2Mal", Label.BENIGN)):
        yield name, [g for g in test if g.label is src], [g for g in graphs if g.label is src.opposite()]


def attack_gea(out, cfg: RunConfig, config_path=None) -> None:
    out = Path(out)
    _require(out, "corpus", "model.json", "normalizer.json", "split.json")
    graphs = _load_graphs(out)
    model, norm = load_model(out)
    test_ids = set(load_split(out)["test"])
    with Stage("attack-gea", out, cfg, config_path, ["corpus", "model.json", "split.json"]) as st:
        lines = ["direction,target_strategy,target_nodes,MR_percent,mean_ct_ms"]
        recs = []
        for direction, originals, pool in _directions(graphs, test_ids):
            for strategy in cfg.gea_strategies:
                target = select_target(pool, strategy)
                try:
                    res = gea_attack(model, norm, originals, target)
                except InvariantViolation as exc:
                    raise InvariantFailure(str(exc)) from None
                lines.append(f"{direction},{strategy},{target.n_nodes},{100 * res.mr:.2f},{res.mean_ct_ms:.3f}")
                recs += [{"direction": direction, "target_strategy": strategy, **o.to_dict()}
                         for o in res.outcomes]
        st.write("gea_results.csv", "\n".join(lines) + "\n")
        st.write("gea_outcomes.jsonl", _jsonl(recs, st.manifest_ref))


def density_sweep(out, cfg: RunConfig, config_path=None) -> None:
    out = Path(out)
    _require(out, "corpus", "model.json", "normalizer.json", "split.json")
    graphs = _load_graphs(out)
    model, norm = load_model(out)
    test_ids = set(load_split(out)["test"])
    want = "Mal2Ben" if cfg.density_direction == "mal2ben" else "Ben2Mal"
    _, originals, pool = next(d for d in _directions(graphs, test_ids) if d[0] == want)
    target = select_target(pool, cfg.density_target)
    with Stage("density-sweep", out, cfg, config_path, ["corpus", "model.json", "split.json"]) as st:
        try:
            levels = density_experiment(model, norm, originals, target, cfg.density_levels, seed=cfg.seed)
        except InvariantViolation as exc:
            raise InvariantFailure(str(exc)) from None
        except ValueError as exc:
            raise PipelineError(str(exc)) from None
        for a, b in zip(levels, levels[1:]):
            for oa, ob in zip(a.result.outcomes, b.result.outcomes):
                if not (ob.density > oa.density and ob.combined_nodes == oa.combined_nodes):
                    raise InvariantFailure(f"{ob.sample_id}: density did not increase at level {b.added_edges}")
        lines = ["direction,target_id,target_nodes,level,added_edges,MR_percent,mean_density,mean_ct_ms"]
        recs = []
        for i, lv in enumerate(levels):
            r = lv.result
            lines.append(f"{want},{target.name},{target.n_nodes},{i},{lv.added_edges},{100 * r.mr:.2f},"
                         f"{r.mean_density:.10g},{r.mean_ct_ms:.3f}")
            recs += [{"level": i, "added_edges": lv.added_edges, **o.to_dict()} for o in r.outcomes]
        st.write("density_results.csv", "\n".join(lines) + "\n")
        st.write("density_outcomes.jsonl", _jsonl(recs, st.manifest_ref))


def _read_csv(path: Path) -> list[dict]:
    import csv
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    fmt = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows])


def report(out, cfg: RunConfig, config_path=None, timing: bool = True) -> str:
    out = Path(out)
    _require(out, "osaa_results.csv", "gea_results.csv", "metrics.json")
    with Stage("report", out, cfg, config_path, ["osaa_results.csv", "gea_results.csv", "metrics.json"]) as st:
        metrics = json.loads((out / "metrics.json").read_text())
        c = metrics["confusion"]
        parts = ["# Adversarial evaluation report", "",
                 "## Classifier (held-out test split, malicious = positive)", "",
                 _table(["accuracy (%)", "FNR (%)", "FPR (%)", "TP", "FN", "TN", "FP"],
                        [[f"{100 * metrics['accuracy']:.2f}", f"{100 * metrics['fnr']:.2f}",
                          f"{100 * metrics['fpr']:.2f}", str(c["tp"]), str(c["fn"]), str(c["tn"]), str(c["fp"])]]),
                 "", "## Feature-space attacks (MR: misclassification rate, Avg.FG: average number "
                 "of changed features, CT: computation time)", ""]
        osaa = _read_csv(out / "osaa_results.csv")
        head = ["Attack Method", "Samples", "MR (%)", "Avg.FG"] + (["CT (ms)"] if timing else [])
        parts.append(_table(head, [[r["method"], r["samples"], r["MR_percent"], r["avg_fg"]]
                                   + ([f"{float(r['mean_ct_ms']):.2f}"] if timing else []) for r in osaa]))
        parts += ["", "## Graph embedding and augmentation: Mal2Ben / Ben2Mal", ""]
        gea = _read_csv(out / "gea_results.csv")
        head = ["Direction", "Size", "# Nodes", "MR (%)"] + (["CT (ms)"] if timing else [])
        parts.append(_table(head, [[r["direction"], r["target_strategy"].capitalize() if r["target_strategy"] in
                                    ("min", "median", "max") else r["target_strategy"],
                                    r["target_nodes"], r["MR_percent"]]
                                   + ([f"{float(r['mean_ct_ms']):.2f}"] if timing else []) for r in gea]))
        if (out / "density_results.csv").exists():
            dens = _read_csv(out / "density_results.csv")
            parts += ["", f"## GEA density sweep ({dens[0]['direction']}, target {dens[0]['target_id']}, "
                          f"{dens[0]['target_nodes']} nodes)", ""]
            head = ["Added edges", "Mean density", "MR (%)"] + (["CT (ms)"] if timing else [])
            parts.append(_table(head, [[r["added_edges"], f"{float(r['mean_density']):.6f}", r["MR_percent"]]
                                       + ([f"{float(r['mean_ct_ms']):.2f}"] if timing else []) for r in dens]))
        parts += ["", f"manifest: {st.manifest_ref}", ""]
        text = "\n".join(parts)
        st.write("report.md", text)
    return text


STAGES = {
    "gen-corpus": gen_corpus,
    "extract": extract,
    "train": train_stage,
    "attack-osaa": attack_osaa,
    "attack-gea": attack_gea,
    "density-sweep": density_sweep,
}


def run_all(out, cfg: RunConfig, config_path=None, threads: int = 1, timing: bool = True) -> str:
    gen_corpus(out, cfg, config_path)
    extract(out, cfg, config_path, threads)
    train_stage(out, cfg, config_path)
    attack_osaa(out, cfg, config_path, threads)
    attack_gea(out, cfg, config_path)
    density_sweep(out, cfg, config_path)
    return report(out, cfg, config_path, timing=timing)
