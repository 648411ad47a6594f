"""End-to-end run of the gate binary on a tiny planted dataset."""
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "python"))
from planted import write_planted  # noqa: E402

GATE = sys.argv[1]
failures = []


def run(*args, expect=0, env=None):
    p = subprocess.run([GATE, *map(str, args)], capture_output=True, text=True,
                       env=None if env is None else {**os.environ, **env})
    if p.returncode != expect:
        failures.append(f"{' '.join(map(str, args))}: exit {p.returncode}, wanted {expect}\n{p.stderr}")
    return p


def read(path):
    return path.read_bytes() if path.exists() else None


def check(cond, what):
    if not cond:
        failures.append(what)


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    raw = write_planted(tmp / "raw")
    bundle = tmp / "bundle"
    common = ["--folds", 2, "--min-user-ratings", 2, "--min-item-ratings", 1]
    run("preprocess", "--data-dir", raw, "--out-dir", bundle, *common)
    check(bundle.is_dir() and any(bundle.iterdir()), "bundle written")

    cfg = tmp / "run.ini"
    cfg.write_text("[train]\nepochs=6\nh1=8\nhidden=4\nd-a=2\nbatch-size=8\n")
    outs = []
    for name in ("a", "b"):
        out = tmp / name
        for fold in (0, 1):
            run("train", "--config", cfg, "--data-dir", bundle, "--out-dir", out, "--fold", fold, "--eval-every", 3)
        run("evaluate", "--data-dir", bundle, "--out-dir", out, "--k-list", "5,10")
        outs.append(out)
    a, b = outs
    for rel in ("fold_0/train_log.jsonl", "fold_1/train_log.jsonl", "fold_0/model.ckpt", "report.json"):
        first = read(a / rel)
        check(first is not None and first == read(b / rel), f"{rel} missing or differs between identical runs")

    log = [json.loads(line) for line in (read(a / "fold_0/train_log.jsonl") or b"").decode().splitlines()]
    check([r["epoch"] for r in log] == list(range(1, 7)), "one log record per epoch")
    check(all("wall_seconds" not in r for r in log), "wall time kept out of the loss log")
    check((a / "fold_0/epoch_3.ckpt").exists() and (a / "fold_0/epoch_6.ckpt").exists(), "periodic checkpoints")
    report = json.loads(read(a / "report.json") or b"{}")
    check(len(report.get("folds", [])) == 2 and report.get("ks") == [5, 10], "report covers both folds")
    check(any("5 folds" in w for w in report.get("warnings", [])), "fold-count warning recorded")

    viz = run("visualize-attention", "--data-dir", bundle, "--out-dir", a, "--items", "i0,i15")
    page = (a / "attention.html").read_text() if (a / "attention.html").exists() else ""
    check("<script" not in page and "i0" in page, "attention page written")
    check("i0" in viz.stdout, "terminal rendering printed")

    viz2 = run("visualize-attention", "--data-dir", bundle, "--out-dir", b, "--items", "i0,i15")
    def body(out):
        return [line for line in out.splitlines() if not line.startswith("html ->")]

    check(read(a / "attention.html") == read(b / "attention.html") and body(viz.stdout) == body(viz2.stdout),
          "attention rendering differs between identical runs")

    n_items = sum(1 for _ in (raw / "documents.tsv").open()) + 1
    check(report.get("mean", {}).get("recall@10", 0) > 10 / n_items, "recall@10 above the random baseline")

    # flags beat config values; the effective value lands in the manifest
    cfg.write_text("[train]\nepochs=2\nrho=3\n")
    run("train", "--config", cfg, "--data-dir", bundle, "--out-dir", tmp / "ovr", "--rho", 7)
    manifest = (tmp / "ovr/fold_0/manifest.txt").read_text() if (tmp / "ovr/fold_0/manifest.txt").exists() else ""
    check("rho=7\n" in manifest and "epochs=2\n" in manifest, "flag overrides config file")

    run("train", "--data-dir", bundle, "--out-dir", tmp / "da", "--epochs", 1, "--d-a", 30, "--no-neighbors")
    manifest = (tmp / "da/fold_0/manifest.txt").read_text() if (tmp / "da/fold_0/manifest.txt").exists() else ""
    check("d_a=30\n" in manifest and "ablation=ae_word_gate\n" in manifest, "--d-a 30 --no-neighbors")

    run("train", "--data-dir", bundle, "--out-dir", tmp / "ae", "--epochs", 1, "--ablation", "ae_only")
    run("evaluate", "--data-dir", bundle, "--out-dir", tmp / "ae")

    # worker count does not change results
    for threads in ("1", "3"):
        run("train", "--config", cfg, "--data-dir", bundle, "--out-dir", tmp / ("t" + threads),
            env={"GATE_THREADS": threads})
    check(read(tmp / "t1/fold_0/model.ckpt") == read(tmp / "t3/fold_0/model.ckpt"), "GATE_THREADS changes results")

    # exit codes
    run("train", "--data-dir", bundle, "--out-dir", a, "--rho", "1.0", expect=2)
    run("train", "--data-dir", bundle, "--out-dir", a, "--fold", 9, expect=2)
    run("train", "--data-dir", tmp / "nowhere", "--out-dir", a, expect=3)
    run("preprocess", "--ratings", tmp / "missing.tsv", "--documents", raw / "documents.tsv",
        "--out-dir", tmp / "x", expect=3)
    run("train", "--bogus-flag", expect=2)

for f in failures:
    print("FAIL:", f)
print("cli smoke:", "ok" if not failures else f"{len(failures)} failures")
sys.exit(1 if failures else 0)
