"""Generate the bundled 100-dimensional word vectors.

Each word is a weighted sum of shared semantic feature directions plus a word-specific
direction, normalized to unit length. Feature directions and word directions are drawn
from a seeded Gaussian, so the file is reproducible byte for byte.

    python3 data/make_embeddings.py > data/embeddings.txt
"""

import numpy as np

DIM = 100
SEED = 20180521

FEATURES = [
    "color", "shape", "number", "quantity", "iteration", "motion", "vertical",
    "horizontal", "place", "object", "grasp", "release", "condition", "negation",
    "robot", "logic", "order", "size", "time", "speech",
]

# (words, {feature: weight}, own-direction weight)
GROUPS = [
    ("red green blue yellow black white orange purple pink brown gray grey violet cyan",
     {"color": 1.0}, 0.8),
    ("triangle square circle star cube ball box rectangle diamond sphere pyramid cylinder hexagon oval",
     {"shape": 1.0}, 0.8),
    ("triangles squares circles stars cubes balls boxes",
     {"shape": 0.9, "quantity": 0.4}, 0.7),
    ("color colour colors colored", {"color": 0.8}, 0.7),
    ("shape shapes shaped", {"shape": 0.8}, 0.7),
    (" ".join(str(n) for n in range(100)), {"number": 1.0, "quantity": 0.3}, 0.7),
    ("one two three four five six seven eight nine ten eleven twelve twenty hundred",
     {"number": 1.0, "quantity": 0.3}, 0.7),
    ("number count amount", {"number": 0.7, "quantity": 0.5}, 0.7),
    ("items objects things blocks pieces", {"object": 0.8, "quantity": 0.5}, 0.6),
    ("item object thing block piece", {"object": 1.0}, 0.6),
    ("every all each many several multiple both whole entire",
     {"quantity": 1.0}, 0.6),
    ("repeat repeatedly again loop iterate", {"iteration": 1.0}, 0.6),
    ("times twice thrice once", {"iteration": 0.8, "number": 0.5}, 0.6),
    ("foreach", {"iteration": 0.7, "quantity": 0.5}, 0.6),
    ("visit go goto reach travel walk move navigate approach come head drive run step",
     {"motion": 1.0}, 0.6),
    ("moves moving visiting going walking", {"motion": 0.9}, 0.6),
    ("up down north south top bottom above below", {"vertical": 1.0, "motion": 0.3}, 0.6),
    ("left right east west side", {"horizontal": 1.0, "motion": 0.3}, 0.6),
    ("world room area place location position field grid map region point cell spot "
     "corner zone floor space site rooms areas points cells locations",
     {"place": 1.0}, 0.6),
    ("containing contains contain holding with", {"place": 0.4, "object": 0.4}, 0.7),
    ("pick take grab get collect gather lift fetch hold has have carry",
     {"grasp": 1.0}, 0.6),
    ("picks picking taking gathering collecting", {"grasp": 0.9}, 0.6),
    ("drop put release leave deposit throw store unload dump",
     {"release": 1.0}, 0.6),
    ("drops dropping putting throwing", {"release": 0.9}, 0.6),
    ("sort sorting arrange order organize distribute",
     {"release": 0.4, "order": 0.8}, 0.6),
    ("first last next then before after line row", {"order": 1.0}, 0.7),
    ("if while until possible when unless strict avoiding avoid otherwise whether",
     {"condition": 1.0}, 0.6),
    ("not no never without minus except", {"negation": 1.0}, 0.6),
    ("and or plus also", {"logic": 1.0}, 0.6),
    ("robot agent machine bot", {"robot": 1.0}, 0.6),
    ("big small large tiny huge little", {"size": 1.0}, 0.6),
    ("now later soon always", {"time": 1.0}, 0.6),
    ("please say tell show find look see want need make do", {"speech": 0.8}, 0.7),
]


def main():
    rng = np.random.default_rng(SEED)
    basis, _ = np.linalg.qr(rng.standard_normal((DIM, DIM)))
    feat = {f: basis[:, i] for i, f in enumerate(FEATURES)}
    seen = set()
    rows = []
    for words, weights, own in GROUPS:
        for w in words.split():
            if w in seen:
                continue
            seen.add(w)
            v = own * rng.standard_normal(DIM) / np.sqrt(DIM)
            for f, a in weights.items():
                v = v + a * feat[f]
            v = v / np.linalg.norm(v)
            rows.append((w, v))
    for w, v in rows:
        print(w + " " + " ".join(f"{x:.6f}" for x in v))


if __name__ == "__main__":
    main()
