"""Synthetic aspect-sentiment corpus with a known decision rule.

Each sentence mentions two aspects, each directly preceded by an opinion
word; a sample's label is the polarity of the word right before its aspect.
Because the two opinions usually disagree, the classifier has to attend to
the right neighbourhood rather than to the sentence as a whole.
"""

from __future__ import annotations

import random

from .data import Sample, make_sample

OPINIONS = {
    "positive": ("great", "excellent", "tasty", "friendly"),
    "neutral": ("average", "standard", "ordinary", "usual"),
    "negative": ("awful", "rude", "terrible", "bland"),
}
ASPECTS = ("food", "service", "staff", "wine", "pizza", "decor", "price", "music")
TEMPLATES = (
    "the {o1} {a1} and the {o2} {a2} .",
    "we had {o1} {a1} but {o2} {a2} tonight",
    "{o1} {a1} , {o2} {a2} !",
    "honestly the {o1} {a1} was nothing like the {o2} {a2}",
)


def synthetic_samples(n_sentences: int = 16, seed: int = 7) -> list[Sample]:
    """``2 * n_sentences`` samples; the default gives the 32-sample corpus."""
    rnd = random.Random(seed)
    labels = list(OPINIONS)
    samples = []
    for k in range(n_sentences):
        a1, a2 = rnd.sample(ASPECTS, 2)
        l1 = labels[k % 3]
        l2 = labels[(k + 1 + rnd.randrange(2)) % 3]
        o1, o2 = rnd.choice(OPINIONS[l1]), rnd.choice(OPINIONS[l2])
        text = TEMPLATES[k % len(TEMPLATES)].format(o1=o1, a1=a1, o2=o2, a2=a2)
        for opinion, aspect, label in ((o1, a1, l1), (o2, a2, l2)):
            start = text.index(f"{opinion} {aspect}") + len(opinion) + 1
            samples.append(make_sample(text, start, start + len(aspect), label, aspect))
    return samples


def vocabulary() -> list[str]:
    words = {w for ws in OPINIONS.values() for w in ws} | set(ASPECTS)
    for t in TEMPLATES:
        words |= {w for w in t.split() if not w.startswith("{")}
    return sorted(words)


def write_vectors(path, d_w: int = 16, seed: int = 11, scale: float = 0.5) -> None:
    """GloVe-format stand-in vectors, U(-scale, scale), for every corpus word."""
    rnd = random.Random(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for w in vocabulary():
            fh.write(w + " " + " ".join(repr(rnd.uniform(-scale, scale)) for _ in range(d_w)) + "\n")
