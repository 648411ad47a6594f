import random
from pathlib import Path


def write_planted(root, users=24, items=16, blocks=2, seed=5):
    """Two-block TSV dataset: ratings, documents and an item citation list."""
    rng = random.Random(seed)
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "ratings.tsv", "w") as f:
        f.write("# user\titem\tscore\n")
        for u in range(users):
            for i in range(items):
                same = u % blocks == i % blocks
                if same and rng.random() < 0.7:
                    f.write(f"u{u}\ti{i}\t5\n")
                elif rng.random() < 0.1:
                    f.write(f"u{u}\ti{i}\t2\n")
    words = {b: [f"topic{b}word{k}" for k in range(4)] for b in range(blocks)}
    with open(root / "documents.tsv", "w") as f:
        for i in range(items):
            if i == items - 1:
                continue  # one item without text
            toks = [rng.choice(words[i % blocks]) for _ in range(6)] + ["shared"]
            f.write(f"i{i}\t{' '.join(toks)}\n")
    with open(root / "relations.tsv", "w") as f:
        for i in range(items):
            f.write(f"i{i}\ti{(i + blocks) % items}\n")
    return root
