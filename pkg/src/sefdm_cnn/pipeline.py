"""End-to-end steps shared by the CLI: generate, train, evaluate, transfer, report.

Output layout under an output directory ``out``::

    data/     <recipe>-<split>.sefc and <recipe>.manifest.json
    models/   <name>.sefm and <name>.history.json
    results/  <name>.<test>.result.json plus curve/confusion CSVs
    report/   report tables and SVG figures
    timing.csv  wall-clock seconds per step (the only non-reproducible file)
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

from . import config as C
from .cnn.io import load_model, save_model
from .cnn.model import init_model
from .cnn.train import train
from .dataset import build_dataset, load_dataset
from .errors import DataError
from .evaluation import evaluate
from .impairments import ImpairmentProfile
from .report import load_result, save_result, write_report
from .transfer import fine_tune

log = logging.getLogger(__name__)


def _dirs(out) -> dict:
    out = Path(out)
    return {k: out / k for k in ("data", "models", "results", "report")}


def recipe_profile(cfg: dict, recipe: str) -> ImpairmentProfile:
    impaired = C.RECIPES[recipe][2]
    return C.profile_a(cfg) if impaired else ImpairmentProfile.identity()


def generate(cfg: dict, recipe: str, out, scale: float = 1.0) -> dict:
    """Materialise a named recipe; returns split -> file path."""
    manifest = C.manifest_for(cfg, recipe, scale)
    data = _dirs(out)["data"]
    data.mkdir(parents=True, exist_ok=True)
    return build_dataset(manifest, recipe_profile(cfg, recipe), data, recipe)


def generate_target(cfg: dict, group: str, domain: str, out) -> dict:
    """Shifted-environment adaptation and test sets; returns split -> path."""
    data = _dirs(out)["data"]
    data.mkdir(parents=True, exist_ok=True)
    m = C.target_manifest(cfg, group, domain)
    return build_dataset(m, C.profile_b(cfg), data, m.name)


def train_model(cfg: dict, train_path, val_path, out, name: str, seed: int | None = None):
    """Train from dataset files; writes the model and its history."""
    tr = load_dataset(train_path)
    va = load_dataset(val_path) if val_path is not None else None
    desc = C.descriptor_for(cfg, tr.n_classes)
    tcfg = C.train_config(cfg, seed)
    model = init_model(desc, seed=tcfg.seed, group=tr.group, domain=tr.domain)
    model.meta = {"name": name, "train_sha256": tr.sha256(),
                  "val_sha256": va.sha256() if va is not None else None,
                  "train_config": tcfg.to_dict()}
    model, hist = train(model, tr, va, tcfg)
    models = _dirs(out)["models"]
    path = save_model(model, models / f"{name}.sefm")
    (models / f"{name}.history.json").write_text(json.dumps(hist.to_dict(), indent=1) + "\n")
    return path, hist.seconds


def evaluate_model(model_path, test_path, out, name: str | None = None,
                   test_name: str | None = None) -> dict:
    model = load_model(model_path)
    test = load_dataset(test_path)
    name = name or model.meta.get("name") or Path(model_path).stem
    prov = model.meta.get("provenance")
    kw = {"condition": "transfer", "base": model.meta.get("base_name", "")} if prov else {}
    test_name = test_name or Path(test_path).stem
    result = evaluate(model, test, name=name, test_name=test_name, **kw)
    return save_result(result, _dirs(out)["results"], f"{name}.{test_name}")


def transfer_model(cfg: dict, model_path, target_path, out, name: str | None = None,
                   seed: int | None = None):
    base = load_model(model_path)
    target = load_dataset(target_path)
    base_name = base.meta.get("name") or Path(model_path).stem
    tcfg = C.transfer_config(cfg, len(target), seed)
    adapted, hist = fine_tune(base, target, tcfg)
    name = name or f"{base_name}+transfer"
    adapted.meta.update({"name": name, "base_name": base_name})
    return save_model(adapted, _dirs(out)["models"] / f"{name}.sefm"), hist.seconds


def report(result_paths, out, figures: bool = True, timing: dict | None = None) -> dict:
    results = [load_result(p) for p in result_paths]
    report_dir = _dirs(out)["report"]
    paths = write_report(results, report_dir, timing)
    if figures:
        from .plotting import render_report

        paths["figures"] = render_report(report_dir)
    return paths


def write_timing(timing: dict, out) -> Path:
    path = Path(out) / "timing.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "seconds"))
        for k in sorted(timing):
            w.writerow((k, f"{timing[k]:.3f}"))
    return path


def reproduce(cfg: dict, out, scale: float = 1.0, models=C.MODEL_RECIPES,
              transfer: bool = True, figures: bool = True, progress=None) -> dict:
    """generate -> train -> eval for each model, the transfer experiment, then report."""
    say = progress or (lambda msg: log.info(msg))
    timing, results = {}, []
    test_paths = {}
    for recipe in models:
        t0 = time.perf_counter()
        paths = generate(cfg, recipe, out, scale)
        group, domain = C.RECIPES[recipe][:2]
        test_recipe = ("fre-" if domain == "freq" else "") + \
            ("test-Type-I" if group == "TypeI" else "test-Type-II")
        if test_recipe not in test_paths:
            test_paths[test_recipe] = generate(cfg, test_recipe, out, scale)["test"]
        timing[f"generate:{recipe}"] = time.perf_counter() - t0
        say(f"training {recipe}")
        model_path, secs = train_model(cfg, paths["train"], paths["val"], out, recipe)
        timing[f"train:{recipe}"] = secs
        r = evaluate_model(model_path, test_paths[test_recipe], out, recipe, "env-A")
        results.append(r["result"])
        say(f"{recipe}: {load_result(r['result']).accuracy:.3f} on env-A")
    if transfer:
        for recipe in C._section(cfg, "transfer").get("models", []):
            if recipe not in models:
                continue
            group, domain = C.RECIPES[recipe][:2]
            target = generate_target(cfg, group, domain, out)
            base_path = _dirs(out)["models"] / f"{recipe}.sefm"
            results.append(evaluate_model(base_path, target["test"], out, recipe, "env-B")["result"])
            adapted, secs = transfer_model(cfg, base_path, target["train"], out)
            timing[f"transfer:{recipe}"] = secs
            r = evaluate_model(adapted, target["test"], out, test_name="env-B")
            results.append(r["result"])
            say(f"{recipe}: transfer to env-B {load_result(r['result']).accuracy:.3f}")
    paths = report(results, out, figures)
    paths["timing"] = write_timing(timing, out)
    return paths


def require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    return path
