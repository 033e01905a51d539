"""End-to-end orchestration over a self-describing run directory.

Every stage is resumable: its outputs depend only on (seed, config,
upstream artifacts), all randomness is drawn from streams keyed by stage
name and index, and artifacts are written atomically (temp file + rename).
Deleting a stage's artifacts and rerunning reproduces them byte-identically
— except ``run_report.json`` and ``report/latency.txt``, which record
wall-clock measurements.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cellspace as cs
from . import gbpredictor as gb
from . import metrics
from . import nnkernel as nk
from . import searcher
from . import soapcore as sc
from . import supernet as sn
from . import synthroute as sr
from .config import RunConfig, config_to_text, load_config
from .errors import (
    BadConfig,
    DegenerateInput,
    MissingArtifact,
    ModelMissing,
    StageError,
)
from .rng import root

STAGE_ORDER = (
    "data",
    "supernets",
    "sets",
    "merge",
    "noise",
    "augment",
    "predictor",
    "search",
    "report",
)

HIST_BINS = 20


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _atomic_write_text(path, buf.getvalue())


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_kv(path: Path, pairs: dict) -> None:
    _atomic_write_text(path, "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs.items()))


def _read_kv(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


@dataclass
class RunReport:
    out_dir: str
    headline: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)

    def validate(self) -> "RunReport":
        base = Path(self.out_dir)
        for stage, paths in self.artifacts.items():
            for rel in paths:
                if not (base / rel).exists():
                    raise MissingArtifact(f"{stage}: {rel} missing from {base}")
        return self


class Pipeline:
    """Stages of one run, bound to a config and an output directory."""

    def __init__(self, config: RunConfig, out_dir):
        self.cfg = config.validate()
        self.out = Path(out_dir)
        self.space = config.space_config()
        self.macro = config.macro_config()
        self._dataset = None
        self.out.mkdir(parents=True, exist_ok=True)
        self._write_or_check_config()

    @classmethod
    def open(cls, run_dir) -> "Pipeline":
        run_dir = Path(run_dir)
        cfg_path = run_dir / "config.cfg"
        if not cfg_path.exists():
            raise MissingArtifact(f"no config.cfg in {run_dir}")
        return cls(load_config(cfg_path), run_dir)

    def _write_or_check_config(self):
        path = self.out / "config.cfg"
        text = config_to_text(self.cfg)
        if path.exists():
            if path.read_text(encoding="utf-8") != text:
                raise BadConfig(
                    f"{path} was written by a different configuration; "
                    "use a fresh output directory"
                )
        else:
            _atomic_write_text(path, text)

    def rng(self, *labels):
        return root(self.cfg.seed).child(*labels)

    def _executor(self):
        if self.cfg.workers <= 1:
            return nullcontext(None)
        return ThreadPoolExecutor(max_workers=self.cfg.workers)

    # -- artifact paths -----------------------------------------------------

    @property
    def data_paths(self) -> dict[int, Path]:
        return {
            tag: self.out / "data" / f"{name}.srds" for tag, name in sr.SPLIT_NAMES.items()
        }

    def supernet_path(self, i: int) -> Path:
        return self.out / "supernets" / f"sn_{i}.snck"

    def set_path(self, i: int) -> Path:
        return self.out / "sets" / f"set_{i}.csv"

    @property
    def smoothed_path(self) -> Path:
        return self.out / "smoothed.csv"

    @property
    def campaign_path(self) -> Path:
        return self.out / "noise_campaign.csv"

    @property
    def noise_model_path(self) -> Path:
        return self.out / "noise_model.txt"

    @property
    def augmented_path(self) -> Path:
        return self.out / "augmented.csv"

    @property
    def predictor_path(self) -> Path:
        return self.out / "predictor.model"

    @property
    def predictor_eval_path(self) -> Path:
        return self.out / "predictor_eval.txt"

    @property
    def search_dir(self) -> Path:
        return self.out / "search"

    @property
    def report_dir(self) -> Path:
        return self.out / "report"

    # -- shared loaders ------------------------------------------------------

    def dataset(self) -> sr.PlacementDataset:
        if self._dataset is None:
            maps = []
            tags = []
            for tag in (sr.TRAIN, sr.VAL, sr.TEST):
                path = self.data_paths[tag]
                if not path.exists():
                    raise MissingArtifact(f"dataset split file {path} missing")
                part = sr.read_dataset(path)
                maps.extend(part.maps)
                tags.extend([tag] * len(part.maps))
            self._dataset = sr.PlacementDataset(
                maps=maps, split_tags=np.array(tags, dtype=np.uint8), seed=self.cfg.seed
            )
        return self._dataset

    def load_supernet(self, i: int) -> sn.CellNetwork:
        path = self.supernet_path(i)
        if not path.exists():
            raise MissingArtifact(f"supernet checkpoint {path} missing")
        return sn.CellNetwork(self.space, self.macro, nk.load_checkpoint(path), seed=i)

    def campaign_archs(self) -> list[cs.CellArchitecture]:
        """The standalone-campaign cells; also pinned into every candidate set."""
        gen = self.rng("noise", "archs").generator()
        seen: set[str] = set()
        archs = []
        while len(archs) < self.cfg.noise_n_archs:
            arch = cs.sample_random(self.space, gen)
            digest = cs.arch_hash(arch, self.space)
            if digest not in seen:
                seen.add(digest)
                archs.append(arch)
        return archs

    def _load_sets(self) -> list[sc.CandidateSet]:
        sets = []
        for i in range(self.cfg.k):
            path = self.set_path(i)
            if not path.exists():
                raise MissingArtifact(f"candidate set {path} missing")
            records = [
                sc.PerfRecord(
                    arch_hash=cs.arch_hash(cs.parse(row["arch"]), self.space),
                    arch=row["arch"],
                    auc=float(row["auc"]),
                    source=row["supernet_id"],
                )
                for row in _read_csv(path)
            ]
            sets.append(sc.CandidateSet(supernet_id=i, records=records))
        return sets

    def _load_noise_models(self) -> dict[str, sc.NoiseModel]:
        if not self.noise_model_path.exists():
            raise MissingArtifact(f"{self.noise_model_path} missing")
        kv = _read_kv(self.noise_model_path)
        out = {}
        for metric in ("auc", "acc"):
            out[metric] = sc.NoiseModel(
                mean=float(kv[f"{metric}_mean"]),
                variance=float(kv[f"{metric}_variance"]),
                n_groups=int(kv["n_groups"]),
                n_samples=int(kv["n_samples"]),
            )
        return out

    def campaign_ground_truth(self) -> dict[str, tuple[str, float]]:
        """arch hash -> (serialization, mean standalone AUC over retrains)."""
        if not self.campaign_path.exists():
            raise MissingArtifact(f"{self.campaign_path} missing")
        by_arch: dict[str, list[float]] = {}
        arch_text: dict[str, str] = {}
        for row in _read_csv(self.campaign_path):
            digest = cs.arch_hash(cs.parse(row["arch"]), self.space)
            by_arch.setdefault(digest, []).append(float(row["auc"]))
            arch_text[digest] = row["arch"]
        return {
            digest: (arch_text[digest], sum(v) / len(v)) for digest, v in by_arch.items()
        }

    def _load_augmented(self) -> list[sc.PerfRecord]:
        if not self.augmented_path.exists():
            raise MissingArtifact(f"{self.augmented_path} missing")
        return [
            sc.PerfRecord(
                arch_hash=cs.arch_hash(cs.parse(row["arch"]), self.space),
                arch=row["arch"],
                auc=float(row["auc"]),
                source=row["source"],
            )
            for row in _read_csv(self.augmented_path)
        ]

    def load_final_model(self) -> tuple[cs.CellArchitecture, sn.CellNetwork]:
        arch_path = self.search_dir / "final_arch.txt"
        ckpt_path = self.search_dir / "final_model.snck"
        if not arch_path.exists() or not ckpt_path.exists():
            raise ModelMissing(f"no finalized model under {self.search_dir}")
        arch = cs.parse(arch_path.read_text(encoding="utf-8").strip())
        net = sn.CellNetwork(self.space, self.macro, nk.load_checkpoint(ckpt_path), seed=0)
        return arch, net

    # -- stages ---------------------------------------------------------------

    def stage_data(self) -> bool:
        paths = self.data_paths
        if all(p.exists() for p in paths.values()):
            return False
        (self.out / "data").mkdir(exist_ok=True)
        cfg = self.cfg
        dataset = sr.generate(
            seed=cfg.seed,
            n_maps=cfg.data_n_maps,
            height=cfg.data_height,
            width=cfg.data_width,
            hotspot_quantile=cfg.data_hotspot_quantile,
        )
        dataset = sr.split(dataset, cfg.split_fractions(), seed=cfg.seed)
        for tag, path in paths.items():
            part = sr.PlacementDataset(maps=dataset.subset(tag), seed=cfg.seed)
            tmp = path.with_name(path.name + ".tmp")
            sr.write_dataset(part, tmp)
            os.replace(tmp, path)
        self._dataset = None
        return True

    def stage_supernets(self) -> bool:
        missing = [i for i in range(self.cfg.k) if not self.supernet_path(i).exists()]
        if not missing:
            return False
        (self.out / "supernets").mkdir(exist_ok=True)
        dataset = self.dataset()
        hyper = self.cfg.supernet_hyper()

        def train_one(i: int):
            net = sn.CellNetwork.build_supernet(
                self.space, self.macro, seed=self.rng("supernet", i, "init").integer()
            )
            trace = sn.train_oneshot(net, dataset, hyper, self.rng("supernet", i, "train"))
            tmp = self.supernet_path(i).with_suffix(".snck.tmp")
            nk.save_checkpoint(net.params, tmp)
            os.replace(tmp, self.supernet_path(i))
            return trace

        with self._executor() as ex:
            if ex is None:
                for i in missing:
                    train_one(i)
            else:
                list(ex.map(train_one, missing))
        return True

    def stage_sets(self) -> bool:
        missing = [i for i in range(self.cfg.k) if not self.set_path(i).exists()]
        if not missing:
            return False
        (self.out / "sets").mkdir(exist_ok=True)
        dataset = self.dataset()
        supernets = [self.load_supernet(i) for i in range(self.cfg.k)]
        plan = self.cfg.sample_plan(pinned=self.campaign_archs())
        with self._executor() as ex:
            sets = sc.build_candidate_sets(
                supernets, dataset, plan, self.rng("sets"), executor=ex
            )
        for cset in sets:
            rows = [(q.arch, q.auc, q.acc, q.supernet_id) for q in cset.query_results]
            _write_csv(self.set_path(cset.supernet_id), ["arch", "auc", "acc", "supernet_id"], rows)
        return True

    def stage_merge(self) -> bool:
        if self.smoothed_path.exists():
            return False
        merged = sc.merge_smoothed(self._load_sets(), self.cfg.include_singletons)
        rows = [
            (r.arch, r.auc, "|".join(str(s) for s in merged.provenance[r.arch_hash]))
            for r in merged.records
        ]
        _write_csv(self.smoothed_path, ["arch", "auc", "sources"], rows)
        return True

    def stage_noise(self) -> bool:
        if self.campaign_path.exists() and self.noise_model_path.exists():
            return False
        dataset = self.dataset()
        archs = self.campaign_archs()
        hyper = self.cfg.standalone_hyper(self.cfg.noise_epochs)
        jobs = [
            (a_idx, r_idx)
            for a_idx in range(len(archs))
            for r_idx in range(self.cfg.noise_n_retrains)
        ]

        def run_job(job):
            a_idx, r_idx = job
            seed = self.rng("noise", "train", a_idx, r_idx).integer()
            result, _ = sn.train_standalone(
                archs[a_idx], dataset, self.space, self.macro, hyper, seed
            )
            return result

        with self._executor() as ex:
            results = (
                [run_job(j) for j in jobs] if ex is None else list(ex.map(run_job, jobs))
            )
        rows = []
        auc_groups: list[list[float]] = [[] for _ in archs]
        acc_groups: list[list[float]] = [[] for _ in archs]
        for (a_idx, r_idx), res in zip(jobs, results):
            rows.append((res.arch, r_idx, res.auc, res.acc))
            auc_groups[a_idx].append(res.auc)
            acc_groups[a_idx].append(res.acc)
        _write_csv(self.campaign_path, ["arch", "retrain", "auc", "acc"], rows)
        auc_model = sc.estimate_noise_model(auc_groups)
        acc_model = sc.estimate_noise_model(acc_groups)
        _write_kv(
            self.noise_model_path,
            {
                "auc_mean": auc_model.mean,
                "auc_variance": auc_model.variance,
                "acc_mean": acc_model.mean,
                "acc_variance": acc_model.variance,
                "n_groups": auc_model.n_groups,
                "n_samples": auc_model.n_samples,
            },
        )
        return True

    def stage_augment(self) -> bool:
        if self.augmented_path.exists():
            return False
        merged_records = [
            sc.PerfRecord(
                arch_hash=cs.arch_hash(cs.parse(row["arch"]), self.space),
                arch=row["arch"],
                auc=float(row["auc"]),
                source=sc.SMOOTHED_SOURCE,
            )
            for row in _read_csv(self.smoothed_path)
        ]
        noise = self._load_noise_models()["auc"]
        augmented = sc.augment(
            sc.SmoothedDataset(records=merged_records),
            self.cfg.factor_x,
            noise,
            self.rng("augment"),
        )
        rows = [(r.arch, r.auc, r.source) for r in augmented]
        _write_csv(self.augmented_path, ["arch", "auc", "source"], rows)
        return True

    def stage_predictor(self) -> bool:
        if self.predictor_path.exists() and self.predictor_eval_path.exists():
            return False
        records = self._load_augmented()
        hyper = self.cfg.predictor_hyper()
        features = np.stack(
            [cs.encode_features(cs.parse(r.arch), self.space) for r in records]
        )
        targets = [r.auc for r in records]
        model, _losses = gb.fit(features, targets, hyper)
        tmp = self.predictor_path.with_suffix(".model.tmp")
        gb.save_model(model, tmp)
        os.replace(tmp, self.predictor_path)
        cv = gb.cross_validate(records, self.cfg.predictor_cv_folds, hyper, self.space)
        gt_pearson, gt_kendall = self.predictor_gt_eval(model)
        _write_kv(
            self.predictor_eval_path,
            {
                "cv_pearson": cv.mean_pearson,
                "cv_kendall_tau": cv.mean_kendall_tau,
                "cv_folds": len(cv.folds),
                "gt_pearson": gt_pearson,
                "gt_kendall_tau": gt_kendall,
                "n_training_records": len(records),
            },
        )
        return True

    def predictor_gt_eval(self, model) -> tuple[float, float]:
        """Predictor vs mean standalone AUC of the campaign cells."""
        truth = self.campaign_ground_truth()
        preds = []
        gt = []
        for digest in sorted(truth):
            arch_text, mean_auc = truth[digest]
            preds.append(
                float(gb.predict(model, cs.encode_features(cs.parse(arch_text), self.space)))
            )
            gt.append(mean_auc)
        try:
            return metrics.pearson(preds, gt), metrics.kendall_tau(preds, gt)
        except DegenerateInput:
            return float("nan"), float("nan")

    def stage_search(self) -> bool:
        report_path = self.search_dir / "report.csv"
        done = [
            report_path,
            self.search_dir / "baseline.csv",
            self.search_dir / "final_arch.txt",
            self.search_dir / "final_model.snck",
            self.search_dir / "summary.txt",
        ]
        if all(p.exists() for p in done):
            return False
        self.search_dir.mkdir(exist_ok=True)
        dataset = self.dataset()
        model = gb.load_model(self.predictor_path)
        budget = self.cfg.search_budget()
        ranked = searcher.search_predictor(model, self.space, budget, self.rng("search"))
        hyper = self.cfg.standalone_hyper(self.cfg.standalone_epochs)
        with self._executor() as ex:
            report, final_net = searcher.finalize(
                ranked,
                budget.n_finalists,
                dataset,
                self.space,
                self.macro,
                hyper,
                self.rng("finalize"),
                executor=ex,
            )
        with self._executor() as ex:
            best, trace = searcher.random_search_baseline(
                self.space,
                dataset,
                self.macro,
                hyper,
                budget.n_finalists,
                self.rng("baseline"),
                executor=ex,
            )
        report.baseline = searcher.BaselineStats(
            best_auc=best.auc,
            median_auc=float(statistics.median(r.auc for r in trace)),
            n_trials=len(trace),
        )
        measured = {f.arch_hash: f for f in report.finalists}
        rows = []
        for rank, cand in enumerate(report.ranked):
            fin = measured.get(cand.arch_hash)
            rows.append(
                (
                    rank,
                    cand.arch,
                    cand.predicted,
                    fin.measured_auc if fin else "",
                    fin.measured_acc if fin else "",
                    1 if fin and cand.arch_hash == report.chosen.arch_hash else 0,
                )
            )
        _write_csv(
            report_path,
            ["rank", "arch", "predicted", "measured_auc", "measured_acc", "chosen"],
            rows,
        )
        _write_csv(
            self.search_dir / "baseline.csv",
            ["trial", "arch", "auc", "acc"],
            [(i, r.arch, r.auc, r.acc) for i, r in enumerate(trace)],
        )
        _atomic_write_text(self.search_dir / "final_arch.txt", report.chosen.arch + "\n")
        tmp = self.search_dir / "final_model.snck.tmp"
        nk.save_checkpoint(final_net.params, tmp)
        os.replace(tmp, self.search_dir / "final_model.snck")
        summary = [
            f"chosen_arch = {report.chosen.arch}",
            f"chosen_measured_auc = {report.chosen.measured_auc!r}",
            f"chosen_measured_acc = {report.chosen.measured_acc!r}",
            f"chosen_predicted_auc = {report.chosen.predicted!r}",
            f"predicted_measured_pearson = {report.predicted_measured_pearson!r}",
            f"baseline_best_auc = {report.baseline.best_auc!r}",
            f"baseline_median_auc = {report.baseline.median_auc!r}",
            f"n_finalists = {len(report.finalists)}",
            f"n_ranked = {len(report.ranked)}",
        ]
        _atomic_write_text(self.search_dir / "summary.txt", "\n".join(summary) + "\n")
        return True

    def stage_report(self, force: bool = False) -> bool:
        outputs = [
            self.report_dir / "hist_auc.csv",
            self.report_dir / "hist_acc.csv",
            self.report_dir / "roc.csv",
            self.report_dir / "summary.txt",
        ]
        if not force and all(p.exists() for p in outputs):
            return False
        self.report_dir.mkdir(exist_ok=True)
        # histograms of queried AUC / accuracy over all candidate sets
        aucs, accs = [], []
        for i in range(self.cfg.k):
            path = self.set_path(i)
            if not path.exists():
                raise MissingArtifact(f"candidate set {path} missing")
            for row in _read_csv(path):
                aucs.append(float(row["auc"]))
                accs.append(float(row["acc"]))
        for name, values in (("hist_auc", aucs), ("hist_acc", accs)):
            counts, edges = np.histogram(values, bins=HIST_BINS, range=(0.0, 1.0))
            rows = [
                (float(edges[b]), float(edges[b + 1]), int(counts[b]))
                for b in range(HIST_BINS)
            ]
            _write_csv(self.report_dir / f"{name}.csv", ["bin_lo", "bin_hi", "count"], rows)
        # ROC of the final model on the test split
        arch, net = self.load_final_model()
        test_maps = self.dataset().subset(sr.TEST)
        probs = net.predict_probs(cs.canonicalize(arch, self.space), test_maps)
        labels = sr.stack_labels(test_maps).ravel()
        curve = metrics.roc_curve(probs.reshape(-1), labels)
        _write_csv(self.report_dir / "roc.csv", ["fpr", "tpr", "threshold"], curve.rows())
        final_auc = metrics.roc_auc(probs.reshape(-1), labels)
        final_acc = metrics.accuracy(probs.reshape(-1), labels)
        noise_kv = _read_kv(self.noise_model_path)
        pred_kv = _read_kv(self.predictor_eval_path)
        search_kv = _read_kv(self.search_dir / "summary.txt")
        summary = [
            "soapnas run summary",
            "",
            f"final_arch = {search_kv['chosen_arch']}",
            f"final_test_auc = {final_auc!r}",
            f"final_test_acc = {final_acc!r}",
            f"roc_area = {curve.area()!r}",
            "",
            "variance of standalone retrains (pooled within-arch):",
            f"  auc_mean = {noise_kv['auc_mean']}",
            f"  auc_variance = {noise_kv['auc_variance']}",
            f"  acc_mean = {noise_kv['acc_mean']}",
            f"  acc_variance = {noise_kv['acc_variance']}",
            "",
            "predictor:",
            f"  cv_pearson = {pred_kv['cv_pearson']}",
            f"  cv_kendall_tau = {pred_kv['cv_kendall_tau']}",
            f"  gt_pearson = {pred_kv['gt_pearson']}",
            f"  gt_kendall_tau = {pred_kv['gt_kendall_tau']}",
            "",
            "search:",
            f"  chosen_measured_auc = {search_kv['chosen_measured_auc']}",
            f"  baseline_median_auc = {search_kv['baseline_median_auc']}",
            f"  baseline_best_auc = {search_kv['baseline_best_auc']}",
        ]
        _atomic_write_text(self.report_dir / "summary.txt", "\n".join(summary) + "\n")
        return True

    # -- drivers -----------------------------------------------------------

    _STAGES = {
        "data": "stage_data",
        "supernets": "stage_supernets",
        "sets": "stage_sets",
        "merge": "stage_merge",
        "noise": "stage_noise",
        "augment": "stage_augment",
        "predictor": "stage_predictor",
        "search": "stage_search",
        "report": "stage_report",
    }

    def run_stage(self, name: str) -> bool:
        try:
            return getattr(self, self._STAGES[name])()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    def run_through(self, last_stage: str) -> dict[str, float]:
        if last_stage not in STAGE_ORDER:
            raise BadConfig(f"unknown stage {last_stage!r}")
        timings = {}
        for name in STAGE_ORDER:
            t0 = time.perf_counter()
            ran = self.run_stage(name)
            if ran:
                timings[name] = time.perf_counter() - t0
            if name == last_stage:
                break
        return timings

    def run_full(self) -> RunReport:
        timings = self.run_through("report")
        latency = benchmark_query_latency(self.out, n_iters=200)
        search_kv = _read_kv(self.search_dir / "summary.txt")
        pred_kv = _read_kv(self.predictor_eval_path)
        noise_kv = _read_kv(self.noise_model_path)
        headline = {
            "final_arch": search_kv["chosen_arch"],
            "final_test_auc": float(search_kv["chosen_measured_auc"]),
            "final_test_acc": float(search_kv["chosen_measured_acc"]),
            "predictor_cv_pearson": float(pred_kv["cv_pearson"]),
            "predictor_cv_kendall_tau": float(pred_kv["cv_kendall_tau"]),
            "predictor_gt_pearson": float(pred_kv["gt_pearson"]),
            "predictor_gt_kendall_tau": float(pred_kv["gt_kendall_tau"]),
            "baseline_median_auc": float(search_kv["baseline_median_auc"]),
            "baseline_best_auc": float(search_kv["baseline_best_auc"]),
            "noise_auc_variance": float(noise_kv["auc_variance"]),
            "noise_acc_variance": float(noise_kv["acc_variance"]),
            "latency_median_ms": latency["median_ms"],
            "latency_p90_ms": latency["p90_ms"],
        }
        artifacts = {
            "data": [f"data/{n}.srds" for n in ("train", "val", "test")],
            "supernets": [f"supernets/sn_{i}.snck" for i in range(self.cfg.k)],
            "sets": [f"sets/set_{i}.csv" for i in range(self.cfg.k)],
            "merge": ["smoothed.csv"],
            "noise": ["noise_campaign.csv", "noise_model.txt"],
            "augment": ["augmented.csv"],
            "predictor": ["predictor.model", "predictor_eval.txt"],
            "search": [
                "search/report.csv",
                "search/baseline.csv",
                "search/final_arch.txt",
                "search/final_model.snck",
                "search/summary.txt",
            ],
            "report": [
                "report/hist_auc.csv",
                "report/hist_acc.csv",
                "report/roc.csv",
                "report/summary.txt",
                "report/latency.txt",
            ],
        }
        report = RunReport(
            out_dir=str(self.out),
            headline=headline,
            artifacts=artifacts,
            timings_s={k: round(v, 3) for k, v in timings.items()},
        ).validate()
        _atomic_write_text(
            self.out / "run_report.json", json.dumps(asdict(report), indent=2, sort_keys=True) + "\n"
        )
        return report


def run_full(config: RunConfig, out_dir) -> RunReport:
    return Pipeline(config, out_dir).run_full()


def benchmark_query_latency(run_dir, n_iters: int = 200) -> dict:
    """Median/p90 single-map eval latency of the finalized model (ms)."""
    if n_iters < 100:
        raise BadConfig("n_iters must be >= 100")
    pipe = Pipeline.open(run_dir)
    arch, net = pipe.load_final_model()
    canon = cs.canonicalize(arch, pipe.space)
    test_maps = pipe.dataset().subset(sr.TEST)
    if not test_maps:
        raise MissingArtifact("no test maps available for the latency benchmark")
    x = sr.stack_features(test_maps[:1])
    for _ in range(10):
        net.forward(canon, x, "eval")
    samples = []
    for _ in range(n_iters):
        t0 = time.perf_counter()
        net.forward(canon, x, "eval")
        samples.append((time.perf_counter() - t0) * 1e3)
    result = {
        "median_ms": float(np.percentile(samples, 50)),
        "p90_ms": float(np.percentile(samples, 90)),
        "n_iters": n_iters,
    }
    pipe.report_dir.mkdir(exist_ok=True)
    _write_kv(pipe.report_dir / "latency.txt", result)
    return result


def report(run_dir) -> Path:
    """Re-emit the report bundle from existing run artifacts."""
    pipe = Pipeline.open(run_dir)
    pipe.stage_report(force=True)
    return pipe.report_dir


def ablation_sweep(
    config: RunConfig,
    k_values: list[int],
    x_values: list[int],
    repeats: int,
    out_dir,
) -> tuple[Path, Path]:
    """Smoothing (k) and augmentation (x) sweeps against standalone truth.

    Per repeat, one pool of max(k) supernets plus one noise campaign is
    built under ``out_dir/rep<i>``; every (k, x) variant then reuses those
    artifacts, so variants differ only in how the predictor's training set
    is assembled. Rows record the predictor's rank agreement with the
    campaign cells' mean standalone AUC.
    """
    if not k_values or not x_values or repeats < 1:
        raise BadConfig("need non-empty sweep lists and repeats >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    max_k = max(list(k_values) + [config.k])
    k_rows = []
    x_rows = []
    for rep in range(repeats):
        rep_seed = root(config.seed).child("ablate", rep).integer()
        rep_cfg = replace(config, seed=rep_seed, k=max_k).validate()
        pipe = Pipeline(rep_cfg, out / f"rep{rep}")
        pipe.run_through("noise")
        sets = pipe._load_sets()
        noise = pipe._load_noise_models()["auc"]
        truth = pipe.campaign_ground_truth()

        def variant_corr(use_sets, factor, label):
            merged = sc.merge_smoothed(
                use_sets, include_singletons=config.include_singletons or len(use_sets) == 1
            )
            augmented = sc.augment(
                merged, factor, noise, root(rep_seed).child("ablate-aug", *label)
            )
            feats = np.stack(
                [cs.encode_features(cs.parse(r.arch), pipe.space) for r in augmented]
            )
            model, _ = gb.fit(feats, [r.auc for r in augmented], rep_cfg.predictor_hyper())
            return pipe.predictor_gt_eval(model)

        for k in k_values:
            pearson, kendall = variant_corr(sets[:k], config.factor_x, ("k", k))
            k_rows.append((k, rep, pearson, kendall))
        for x in x_values:
            pearson, kendall = variant_corr(sets[: config.k], x, ("x", x))
            x_rows.append((x, rep, pearson, kendall))
    k_path = out / "ablation_k.csv"
    x_path = out / "ablation_x.csv"
    _write_csv(k_path, ["k", "repeat", "pearson", "kendall_tau"], k_rows)
    _write_csv(x_path, ["x", "repeat", "pearson", "kendall_tau"], x_rows)
    return k_path, x_path
