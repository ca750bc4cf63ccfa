import random

import pytest

from alsel.corpus import ParallelCorpus, make_record


def synth_sentence(rng: random.Random, lo: int = 1, hi: int = 20) -> str:
    n = rng.randint(lo, hi)
    return " ".join(f"w{rng.randint(0, 999)}" for _ in range(n))


def synth_corpus(
    n: int, seed: int = 0, lo: int = 1, hi: int = 20, provenance: str = "synth"
) -> ParallelCorpus:
    """Clean synthetic parallel corpus: targets never empty or identical."""
    rng = random.Random(seed)
    records = tuple(
        make_record(i, synth_sentence(rng, lo, hi), f"t{i} {synth_sentence(rng, lo, hi)}")
        for i in range(n)
    )
    return ParallelCorpus(records, provenance=provenance)


@pytest.fixture
def small_corpus() -> ParallelCorpus:
    return synth_corpus(50, seed=7)
