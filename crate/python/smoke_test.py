"""Smoke test for the sra_py extension module.

Build first:  maturin develop --release -m crates/python/Cargo.toml
"""

import math
import os
import sys
import tempfile

import sra_py


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    check(
        sra_py.select_low_frequency({"a": 5, "b": 1, "c": 3, "d": 1}, 0.5) == ["b", "d"],
        "low-frequency selection",
    )

    index = sra_py.SparseIndex(
        [
            ("d0", "late payment fee"),
            ("d1", "late payment interest"),
            ("d2", "governing law venue"),
            ("d3", "governing law court"),
        ]
    )
    hits = index.candidates("late payment", 2)
    check([h[0] for h in hits] == ["d0", "d1"], "sparse candidates")

    def cosine(a, b):
        return math.fsum(x * y for x, y in zip(a, b)) / math.sqrt(
            math.fsum(x * x for x in a) * math.fsum(y * y for y in b)
        )

    fee, fees, law = sra_py.embed(["late payment fee", "late payment fees", "governing law"])
    check(len(fee) == 256 and cosine(fee, fees) > cosine(fee, law), "dense embeddings")

    long_clause = " ".join(f"w{i}" for i in range(200))
    out = sra_py.compose("fees are due monthly", [long_clause])
    check(out["was_augmented"] and out["token_count"] <= 512, "compose")
    check(sra_py.truncate_tokens("a b c d", 2) == "a b", "truncate")

    f1 = sra_py.f1_scores([["x"], ["y"], ["x"]], [["x"], ["x"], ["x"]], ["x", "y"])
    check(abs(f1["micro_f1"] - 2 / 3) < 1e-12, "micro-F1 equals accuracy")
    check(abs(sra_py.mcnemar(0, 5)["p_value"] - 0.0625) < 1e-12, "exact McNemar")

    data = sra_py.synthetic_dataset()
    check(len(data) == 2370 and len(data.labels) == 12, "synthetic corpus")

    pipeline = sra_py.Pipeline.from_dataset(
        data, ["alpha=0.75", "learning_rate=30.0", "max_epochs=5", "resamples=500"]
    )
    with tempfile.TemporaryDirectory() as tmp:
        base = pipeline.run("baseline")
        sra = pipeline.run("sra", os.path.join(tmp, "sra"))
        check(os.path.exists(os.path.join(tmp, "sra", "report.json")), "run directory written")
    print(f"     baseline macro-F1 {base['test']['macro_f1']:.4f}, sra macro-F1 {sra['test']['macro_f1']:.4f}")
    check(sra["pooled_coverage"] > 0.0 and base["pooled_coverage"] == 0.0, "coverage")

    try:
        sra_py.load_dataset("/nonexistent/corpus.jsonl")
    except (ValueError, OSError):
        check(True, "load error raised")
    else:
        check(False, "load error raised")

    print("smoke test passed")


if __name__ == "__main__":
    main()
