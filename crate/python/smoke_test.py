"""End-to-end smoke test for the lsrec_py extension module.

Builds the cdylib if needed, imports it, synthesizes a tiny corpus,
trains for a few epochs, and sanity-checks metrics and checkpointing.

Run from the repository root:

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    names = ("liblsrec_py.so", "liblsrec_py.dylib", "lsrec_py.dll")
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in names
    ]
    existing = [p for p in candidates if p.exists()]
    if not existing:
        subprocess.run(
            ["cargo", "build", "-p", "lsrec-py"], cwd=REPO, check=True
        )
        existing = [p for p in candidates if p.exists()]
    if not existing:
        sys.exit("could not find the built lsrec_py library")
    return max(existing, key=lambda p: p.stat().st_mtime)


def import_module(workdir: Path):
    lib = locate_cdylib()
    target = workdir / ("lsrec_py" + (".pyd" if lib.suffix == ".dll" else ".so"))
    shutil.copy2(lib, target)
    sys.path.insert(0, str(workdir))
    import lsrec_py

    return lsrec_py


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="lsrec_smoke_"))
    lsrec_py = import_module(workdir)

    corpus = workdir / "corpus"
    n = lsrec_py.synthesize(
        str(corpus),
        n_users=60,
        n_items=200,
        n_topics=10,
        items_per_topic=20,
        seq_len_min=15,
        seq_len_max=25,
        w_long=0.5,
        drift_rate=0.2,
        seed=5,
    )
    assert n > 0, "synthesize wrote no interactions"
    assert (corpus / "interactions.csv").exists()
    assert (corpus / "drivers.csv").exists()
    print(f"synthesized {n} interactions")

    session = lsrec_py.Session(
        str(corpus / "interactions.csv"),
        drivers_path=str(corpus / "drivers.csv"),
        embed_dim=8,
        lr=0.002,
        seed=5,
        max_seq_len=30,
        eval_negatives=9,
    )
    print(repr(session))

    history = session.train(epochs=3, batch_size=32)
    assert len(history) == 3
    for row in history:
        assert math.isfinite(row["joint"]), f"non-finite loss: {row}"
    assert history[-1]["rec"] < history[0]["rec"], (
        f"recommendation loss did not improve: "
        f"{history[0]['rec']:.4f} -> {history[-1]['rec']:.4f}"
    )
    print(
        f"trained 3 epochs, rec loss {history[0]['rec']:.4f} -> "
        f"{history[-1]['rec']:.4f}"
    )

    for side in ("long", "short", "both"):
        report = session.evaluate(split="test", side=side)
        assert 0.0 <= report["auc"] <= 1.0
        assert 0.0 <= report["gauc"] <= 1.0
        assert 0.0 <= report["mrr"] <= 1.0
        assert report["instances"] > 0
        print(
            f"eval side={side}: auc={report['auc']:.4f} "
            f"gauc={report['gauc']:.4f} mrr={report['mrr']:.4f}"
        )

    alphas = session.alpha_by_driver()
    assert set(alphas) <= {"long", "short"}
    for driver, mean in sorted(alphas.items()):
        assert 0.0 <= mean <= 1.0
        print(f"mean alpha for {driver}-driven targets: {mean:.4f}")

    ckpt = workdir / "session.ckpt"
    session.save(str(ckpt))
    assert ckpt.stat().st_size > 0
    print(f"checkpoint written: {ckpt.stat().st_size} bytes")

    print("smoke test passed")


if __name__ == "__main__":
    main()
