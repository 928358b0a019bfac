"""Synthetic corpus generator with planted ground truth.

Produces a manifest, per-movie detection files, a Bechdel cache, a factors
file, and a truth ledger. Each movie gets a planted true female-face ratio;
detected labels are corrupted so that the configured precision factors hold
exactly in expectation: among detected-female faces a share of
1 - lambda_female are truly male, among detected-male faces 1 - lambda_male
are truly female. Running the corrected pipeline over the output should
therefore recover the planted ratios.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import MANIFEST_COLUMNS, load_manifest, split_periods

GENRE_POOL = ("Drama", "Comedy", "Action", "Crime", "Romance", "Thriller", "Horror", "Sci-Fi")
FACES_PER_FRAME_WEIGHTS = (0.30, 0.42, 0.17, 0.08, 0.03)  # 0..4 faces


@dataclass
class SynthConfig:
    n_movies: int = 20
    frames_per_movie: int = 150
    seed: int = 7
    year_lo: int = 1986
    year_hi: int = 2017
    true_ffrs: tuple = (0.2, 0.35, 0.5, 0.65)
    lambda_male: float = 410 / 485
    lambda_female: float = 304 / 466
    periods: int = 4
    interval_s: float = 2.0


def detected_rate_for(truth: float, lambda_male: float, lambda_female: float) -> float:
    """Detected-female share that makes the corrected ratio equal the truth."""
    slope = lambda_male + lambda_female - 1.0
    if slope <= 0:
        raise ValueError("non-identifiable factors")
    rate = (truth - (1.0 - lambda_male)) / slope
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"true ratio {truth} not reachable with these factors")
    return rate


def generate(out_dir, config: SynthConfig | None = None) -> dict:
    """Write the synthetic corpus; returns the truth ledger."""
    cfg = config or SynthConfig()
    out = Path(out_dir)
    (out / "detections").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    years = np.sort(rng.integers(cfg.year_lo, cfg.year_hi + 1, size=cfg.n_movies))
    runtime_min = int(math.ceil(cfg.frames_per_movie * cfg.interval_s / 60.0)) + 1

    manifest_rows = []
    truth: dict = {"config": {
        "n_movies": cfg.n_movies, "frames_per_movie": cfg.frames_per_movie,
        "seed": cfg.seed, "lambda_male": cfg.lambda_male, "lambda_female": cfg.lambda_female,
    }, "movies": {}}

    for i in range(cfg.n_movies):
        mid = f"syn{i:04d}"
        true_ffr = cfg.true_ffrs[i % len(cfg.true_ffrs)]
        rate = detected_rate_for(true_ffr, cfg.lambda_male, cfg.lambda_female)

        n_genres = int(rng.integers(1, 3))
        genres = sorted(rng.choice(GENRE_POOL, size=n_genres, replace=False).tolist())
        budget = int(rng.integers(1, 200)) * 1_000_000
        manifest_rows.append({
            "id": mid, "title": f"Synthetic {i}", "year": int(years[i]),
            "genres": "|".join(genres), "runtime_min": runtime_min,
            "budget_usd": budget, "gross_usd": int(budget * float(rng.uniform(0.2, 5.0))),
            "rating_value": round(float(rng.uniform(3.0, 9.0)), 1),
            "rating_count": int(rng.integers(500, 200_000)),
            "female_rating_share": round(min(0.95, max(0.05, true_ffr + float(rng.normal(0, 0.05)))), 3),
            "parental_rating": "R", "seeders": int(rng.integers(3, 500)),
            "frame_width": 1920, "frame_height": 1080,
        })

        faces_per_frame = rng.choice(len(FACES_PER_FRAME_WEIGHTS), size=cfg.frames_per_movie,
                                     p=FACES_PER_FRAME_WEIGHTS)
        total = int(faces_per_frame.sum())
        female = rng.random(total) < rate
        w = rng.uniform(0.04, 0.28, size=total)
        h = np.minimum(w * rng.uniform(0.9, 1.4, size=total), 0.9)
        x = rng.uniform(0, 1, size=total) * (1.0 - w)
        y = rng.uniform(0, 1, size=total) * (1.0 - h)

        lines = []
        k = 0
        for frame_idx in range(cfg.frames_per_movie):
            ts = int(frame_idx * cfg.interval_s * 1000)
            for _ in range(int(faces_per_frame[frame_idx])):
                gender = "female" if female[k] else "male"
                lines.append(
                    '{"movie_id": "%s", "frame_ts_ms": %d, "x": %.6f, "y": %.6f, '
                    '"w": %.6f, "h": %.6f, "gender": "%s"}'
                    % (mid, ts, x[k], y[k], w[k], h[k], gender)
                )
                k += 1
        (out / "detections" / f"{mid}.jsonl").write_text("\n".join(lines) + "\n")

        truth["movies"][mid] = {
            "true_ffr": true_ffr, "detected_rate": rate, "faces": total,
            "detected_female": int(female.sum()), "year": int(years[i]),
        }

    manifest_path = out / "manifest.csv"
    with manifest_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(MANIFEST_COLUMNS))
        writer.writeheader()
        writer.writerows(manifest_rows)

    # Bechdel cache: pass probability rises with the planted ratio, so the
    # genre-level correlation has signal at desk scale
    cache_lines = []
    for i, row in enumerate(manifest_rows):
        t = truth["movies"][row["id"]]["true_ffr"]
        p_pass = 1.0 / (1.0 + math.exp(-10 * (t - 0.35)))
        if rng.random() < 0.9:  # ~90% coverage
            score = 3 if rng.random() < p_pass else int(rng.integers(0, 3))
            cache_lines.append(json.dumps({"id": row["id"], "rating": score}))
    (out / "bechdel_cache.jsonl").write_text("\n".join(cache_lines) + "\n")

    # factors file keyed by the same periods the analysis will use
    manifest = load_manifest(manifest_path)
    partition = split_periods(manifest, cfg.periods)
    factors_doc = {
        p.key: {"lambda_male": cfg.lambda_male, "lambda_female": cfg.lambda_female,
                "n_tasks": 0}
        for p in partition.periods
    }
    (out / "factors.json").write_text(json.dumps(factors_doc, indent=2, sort_keys=True))
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True))
    return truth


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="generate a synthetic test corpus")
    parser.add_argument("--out", required=True)
    parser.add_argument("--movies", type=int, default=20)
    parser.add_argument("--frames", type=int, default=150)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--periods", type=int, default=4)
    args = parser.parse_args(argv)
    generate(args.out, SynthConfig(n_movies=args.movies, frames_per_movie=args.frames,
                                   seed=args.seed, periods=args.periods))
    print(f"synthetic corpus written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
