"""Regenerate the planted-topic fixtures and their pipeline configs under tests/fixtures/."""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from muscad.synthetic import planted_topic_corpus

# CBOW and trainer settings that let 36-word planted topics separate cleanly;
# library defaults are sized for real review corpora
PLANTED_CONFIG = {
    "seed": 0,
    "threads": 1,
    "corpus": {"stopwords": ["."], "min_count": 5},
    "cbow": {"dim": 32, "epochs": 20},
    "clustering": {"k": 3, "frequency_floor": 20},
    "aspect": {"heads": 4},
    "train": {"learning_rate": 0.01, "epochs": 15, "m_negatives": 20, "batch_size": 64},
    "lexicon": {"top_n": 10},
    "metrics": {"top_n": 10, "window": 10},
}

SWEEP_CONFIG = {
    **PLANTED_CONFIG,
    "corpus": {"stopwords": ["."], "min_count": 1},
    "cbow": {"dim": 16, "epochs": 5},
    "train": {"learning_rate": 0.01, "epochs": 3, "m_negatives": 10, "batch_size": 64},
    "lexicon": {"top_n": 50, "sweep": [50, 100, 150, 200, 250]},
}


def write(out: Path, name: str, corpus, config: dict) -> None:
    corpus.write(out / f"{name}.jsonl")
    (out / f"{name}_gold.jsonl").write_text(corpus.gold_jsonl(), encoding="utf-8")
    (out / f"{name}_topics.json").write_text(json.dumps(corpus.topics, indent=2) + "\n", encoding="utf-8")
    (out / f"{name}_config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(out, "planted", planted_topic_corpus(seed=0), PLANTED_CONFIG)
    # topic sentences plus generic filler sentences: coverage keeps growing with N
    write(out, "sweep", planted_topic_corpus(sentences_per_topic=60, background_sentences=300,
                                             background_words=1500, seed=1), SWEEP_CONFIG)
    # 50 reviews, for the labeling laws
    write(out, "labeling", planted_topic_corpus(sentences_per_topic=30, sentences_per_review=(1, 3),
                                                background_sentences=10, background_words=30, seed=9),
          PLANTED_CONFIG)
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
