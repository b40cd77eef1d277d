"""Grid search over model variants and discriminator noise levels."""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

from .genre_eval import GenreClassifier, evaluate_model
from .trainer import (
    VARIANTS,
    TrainConfig,
    TrainingAborted,
    build_model,
    load_transfer_model,
    save_transfer_model,
    train,
)

logger = logging.getLogger(__name__)

SIGMA_GRID = (0.0, 0.01, 0.1, 1.0, 3.0, 5.0)


def cell_name(variant: str, sigma_d: float) -> str:
    return f"{variant}_sd{sigma_d:g}"


def sweep(
    train_sets,
    test_sets,
    classifier: GenreClassifier,
    template: TrainConfig,
    variants=VARIANTS,
    sigma_grid=SIGMA_GRID,
    genres: tuple[str, str] = ("A", "B"),
    out_dir=None,
    eval_sigma_c: float = 0.0,
) -> dict:
    """Train and evaluate one model per (variant, sigma_d) cell.

    ``train_sets`` is ``(X_a, X_b[, X_c])`` and ``test_sets`` is
    ``(X_a_test, X_b_test)``. Cells that fail are recorded with
    ``status="failed"`` and the sweep moves on. Returns a report whose
    ``cells`` are ranked by total transfer strength (failed cells last);
    ``best`` names the top cell. Every cell uses ``template.seed``.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    cells = []
    for variant in variants:
        for sigma in sigma_grid:
            cfg = replace(template, variant=variant, sigma_d=float(sigma))
            name = cell_name(variant, sigma)
            cell = {"name": name, "variant": variant, "sigma_d": float(sigma)}
            ckpt_dir = out_dir / "cells" / name if out_dir is not None else None
            try:
                model = build_model(cfg, genres)
                model, history = train(model, train_sets, cfg, checkpoint_dir=ckpt_dir)
                report = evaluate_model(model, classifier, *test_sets, eval_sigma_c=eval_sigma_c, seed=cfg.seed)
            except (TrainingAborted, ValueError) as exc:
                logger.warning("cell %s failed: %s", name, exc)
                cell.update(status="failed", error=str(exc), diagnostics=getattr(exc, "record", None))
                cells.append(cell)
                continue
            report.model_id = name
            cell.update(
                status="ok",
                epochs=len(history),
                final_losses={k: v for k, v in history[-1].items() if k != "epoch"} if len(history) else {},
                total_strength=report.total_strength,
                report=report.to_dict(),
                history=history.to_list(),
                checkpoint=str(ckpt_dir / "final.npz") if ckpt_dir is not None else None,
            )
            cells.append(cell)
            logger.info("cell %s: S_tot=%.4f", name, report.total_strength)

    ranked = sorted(
        cells,
        key=lambda c: (c["status"] != "ok", -c.get("total_strength", 0.0)),
    )
    for rank, cell in enumerate(ranked, 1):
        cell["rank"] = rank
    best = ranked[0] if ranked and ranked[0]["status"] == "ok" else None
    result = {
        "genres": list(genres),
        "variants": list(variants),
        "sigma_grid": [float(s) for s in sigma_grid],
        "template": template.to_dict(),
        "eval_sigma_c": float(eval_sigma_c),
        "cells": ranked,
        "best": best["name"] if best else None,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if best and best.get("checkpoint"):
            # tag the winner next to the report
            model, cfg, _ = load_transfer_model(best["checkpoint"])
            result["best_checkpoint"] = str(
                save_transfer_model(out_dir / "best.npz", model, cfg, tag="best", total_strength=best["total_strength"])
            )
        (out_dir / "sweep_report.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result
