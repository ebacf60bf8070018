"""Regenerate src/setrank/toy_ratings.tsv.

Eighty users rate a random subset of sixty items; the 1-5 ratings come
from a rank-3 score matrix plus noise, so the log has learnable structure.
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "setrank" / "toy_ratings.tsv"


def main():
    rng = np.random.default_rng(20240611)
    n_users, n_items, rank = 80, 60, 3
    U = rng.normal(size=(n_users, rank))
    V = rng.normal(size=(n_items, rank))
    pop = rng.normal(0.0, 0.7, size=n_items)
    lines = []
    t = 1_000_000_000
    for i in range(n_users):
        n_rated = int(rng.integers(20, 36))
        items = np.sort(rng.choice(n_items, size=n_rated, replace=False))
        raw = U[i] @ V[items].T + pop[items] + rng.normal(0.0, 0.5, size=n_rated)
        ratings = np.clip(np.round(3.0 + raw), 1, 5).astype(int)
        for j, r in zip(items, ratings):
            t += int(rng.integers(1, 500))
            lines.append(f"u{i:03d}\ti{j:03d}\t{r}\t{t}")
    OUT.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
