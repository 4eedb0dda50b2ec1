#!/usr/bin/env python3
"""Generates the bundled synthetic corpus under tests/fixtures/synthetic.

Writes papers, institute registry, companies, region boundaries, a run
config, and truth.json: the intended outcome of every paper row (rejected,
dropped, DL or not, regions) as fixed by construction. The oracle in
fixture_oracle.py works from truth.json only.

Also writes data/topic_model_28.csv and data/stopwords.txt.

Usage: python3 tools/make_fixture.py [repo_root]
"""

import json
import math
import random
import sys
from pathlib import Path

SEED = 20240611

# ---------------------------------------------------------------------------
# Topic model: two DL topics plus 26 others.

DL_TOPICS = {
    "dl_0": [("neural_network", 0.95), ("deep", 0.8), ("neural", 0.7), ("network", 0.6), ("layer", 0.5),
             ("convolutional", 0.45), ("backpropagation", 0.4), ("activation", 0.3)],
    "dl_1": [("deep_learning", 0.9), ("representation", 0.55), ("embedding", 0.5), ("autoencoder", 0.45),
             ("recurrent", 0.4), ("lstm", 0.35), ("dropout", 0.3), ("pretraining", 0.25)],
}

OTHER_TOPICS = [
    ["image", "pixel", "segmentation", "camera", "object", "detection"],
    ["language", "parsing", "corpus", "translation", "grammar", "sentence"],
    ["kernel", "margin", "classifier", "svm", "feature", "regularization"],
    ["bayesian", "posterior", "prior", "inference", "likelihood", "sampling"],
    ["planning", "agent", "search", "heuristic", "logic", "reasoning"],
    ["graph", "vertex", "edge", "clustering", "spectral", "community"],
    ["reinforcement", "reward", "policy", "bandit", "exploration", "markov"],
    ["speech", "acoustic", "phoneme", "speaker", "audio", "recognition"],
    ["video", "motion", "tracking", "frame", "temporal", "action"],
    ["ontology", "knowledge", "semantic", "entity", "relation", "query"],
    ["convex", "optimization", "solver", "constraint", "dual", "convergence"],
    ["sparse", "lasso", "compressed", "recovery", "dictionary", "basis"],
    ["causal", "intervention", "confounder", "treatment", "effect", "counterfactual"],
    ["robot", "manipulation", "grasp", "navigation", "sensor", "control"],
    ["privacy", "differential", "anonymity", "secure", "leakage", "adversary"],
    ["recommendation", "user", "rating", "collaborative", "filtering", "preference"],
    ["game", "equilibrium", "auction", "mechanism", "strategy", "payoff"],
    ["stereo", "depth", "reconstruction", "geometry", "calibration", "pose"],
    ["sentiment", "opinion", "review", "emotion", "polarity", "lexicon"],
    ["dialogue", "conversation", "utterance", "response", "chatbot", "turn"],
    ["time", "series", "forecasting", "seasonal", "trend", "anomaly"],
    ["tensor", "factorization", "decomposition", "rank", "matrix", "completion"],
    ["ensemble", "boosting", "bagging", "forest", "tree", "stump"],
    ["fairness", "bias", "discrimination", "audit", "protected", "group"],
    ["medical", "clinical", "patient", "diagnosis", "imaging", "health"],
    ["crowdsourcing", "annotation", "label", "worker", "noise", "aggregation"],
]

SUBJECTS = ["cs.AI", "cs.CL", "cs.CV", "cs.LG", "stat.ML"]
SUBJECT_TOPICS = {
    "cs.AI": [4, 6, 9, 16, 13],
    "cs.CL": [1, 18, 19, 9, 7],
    "cs.CV": [0, 8, 17, 24, 13],
    "cs.LG": [2, 10, 11, 21, 22, 6],
    "stat.ML": [3, 12, 20, 11, 23],
}
SUBJECT_DL_FACTOR = {"cs.AI": 0.7, "cs.CL": 1.0, "cs.CV": 1.4, "cs.LG": 1.3, "stat.ML": 0.8}
GENERIC = ["analysis", "data", "model", "problem", "performance", "experiment", "evaluation", "framework",
           "algorithm", "system", "task", "benchmark", "accuracy", "study", "dataset", "training", "learning",
           "prediction", "estimation", "theory", "empirical", "efficient", "robust", "scalable", "large"]
DL_PHRASES = ["deep neural network", "deep learning", "convolutional layer", "recurrent lstm",
              "learned embedding representation", "dropout activation", "autoencoder pretraining",
              "backpropagation"]

SECTORS = {
    "agriculture": ["crop", "farm", "soil", "harvest", "irrigation", "livestock"],
    "education": ["student", "school", "tutoring", "course", "teacher", "curriculum"],
    "energy": ["solar", "grid", "battery", "power", "utility", "wind"],
    "fintech": ["payment", "banking", "trading", "credit", "loan", "insurance"],
    "health": ["hospital", "patient", "clinical", "diagnosis", "drug", "care"],
    "media": ["video", "news", "streaming", "advertising", "content", "music"],
    "retail": ["shopping", "ecommerce", "store", "consumer", "inventory", "fashion"],
    "robotics": ["robot", "drone", "automation", "warehouse", "manipulation", "factory"],
    "security": ["cybersecurity", "fraud", "threat", "malware", "identity", "encryption"],
    "transport": ["vehicle", "driving", "logistics", "fleet", "delivery", "mobility"],
}
BUSINESS = ["company", "platform", "service", "customer", "solution", "software", "startup", "product",
            "enterprise", "market", "team", "technology", "provider", "network", "mobile", "cloud"]

# ---------------------------------------------------------------------------
# Geography: six rectangles in three countries, plus an ocean point.

REGIONS = [
    ("US-CA", "US", (-124.0, 32.0, -114.0, 42.0)),
    ("US-MA", "US", (-73.5, 41.0, -69.9, 43.0)),
    ("GB-ENG", "GB", (-5.7, 50.0, 1.8, 55.0)),
    ("GB-SCT", "GB", (-7.5, 55.5, -1.7, 58.6)),
    ("CN-BJ", "CN", (115.4, 39.4, 117.5, 41.1)),
    ("CN-SH", "CN", (120.8, 30.6, 122.2, 31.9)),
]
OCEAN = (0.0, -30.0)
REGION_DL_FACTOR = {"US-CA": 1.3, "US-MA": 1.0, "GB-ENG": 0.8, "GB-SCT": 0.6, "CN-BJ": 1.1, "CN-SH": 1.5}
REGION_WEIGHT = {"US-CA": 5, "US-MA": 3, "GB-ENG": 3, "GB-SCT": 1, "CN-BJ": 3, "CN-SH": 2}

PLACES = ["Alderon", "Brevik", "Castellan", "Dunmore", "Elstow", "Fairhaven", "Glenrock", "Harrowgate",
          "Ivybridge", "Jarrowfield", "Kestrel", "Lindmoor", "Marwick", "Northcliff", "Oakhurst", "Pemberton",
          "Quillon", "Ravensworth", "Stanmoor", "Thornbury", "Umberleigh", "Valemont", "Westbrook", "Yarrow",
          "Zelmont", "Ashcombe", "Bramley", "Coldridge", "Drayton", "Eskdale", "Fenwick", "Grantley"]
TEMPLATES = ["University of {}", "{} University", "{} Institute of Technology", "{} Polytechnic",
             "{} Research Center", "{} College"]
NOISE_AFFILIATIONS = ["Independent Consultant", "Self Employed", "Private Address", "Freelance Engineer",
                      "Home Office", "Retired"]


# ---------------------------------------------------------------------------
# Independent fuzzy scorer, used only to verify the fixture is unambiguous.

def normalize(s):
    out = []
    for ch in s.lower():
        out.append(ch if ch.isalnum() else " ")
    return " ".join("".join(out).split())


def lev(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def token_sort(a, b):
    x, y = " ".join(sorted(a.split())), " ".join(sorted(b.split()))
    return 1 - lev(x, y) / max(len(x), len(y), 1)


def partial(a, b):
    s, l = (a, b) if len(a) <= len(b) else (b, a)
    if not s:
        return 1.0
    return max(1 - lev(s, l[i:i + len(s)]) / len(s) for i in range(len(l) - len(s) + 1))


def score(q, c):
    f1, f2 = token_sort(q, c), partial(q, c)
    return math.sqrt((f1 * f1 + f2 * f2) / 2)


def best_scores(query, registry):
    q = normalize(query)
    out = []
    for e in registry:
        names = [normalize(e["name"])] + [normalize(a) for a in e["aliases"]]
        out.append((max(score(q, n) for n in names), e["registry_id"]))
    out.sort(reverse=True)
    return out


def typo(rng, name):
    """One or two edits inside the place word, keeping the name recognisable."""
    words = name.split()
    idx = max(range(len(words)), key=lambda i: len(words[i]))
    w = list(words[idx])
    for _ in range(rng.choice([1, 2])):
        pos = rng.randrange(1, len(w) - 1)
        op = rng.randrange(3)
        if op == 0:
            w[pos] = rng.choice("aeiourst")
        elif op == 1:
            del w[pos]
        else:
            w.insert(pos, rng.choice("aeiourst"))
    words[idx] = "".join(w)
    out = " ".join(words)
    return out.upper() if rng.random() < 0.2 else out


# ---------------------------------------------------------------------------

def rect_polygon(box):
    x0, y0, x1, y1 = box
    return [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]


def point_in(rng, box):
    x0, y0, x1, y1 = box
    return (round(rng.uniform(y0 + 0.1, y1 - 0.1), 4), round(rng.uniform(x0 + 0.1, x1 - 0.1), 4))


def build(root):
    rng = random.Random(SEED)
    fixture = root / "tests" / "fixtures" / "synthetic"
    fixture.mkdir(parents=True, exist_ok=True)
    data = root / "data"
    data.mkdir(exist_ok=True)

    # Topic model and stopwords.
    lines = ["topic_id,word,weight"]
    for tid, terms in DL_TOPICS.items():
        lines += [f"{tid},{w},{wt}" for w, wt in terms]
    for i, words in enumerate(OTHER_TOPICS):
        tid = f"t{i + 2:02d}"
        lines += [f"{tid},{w},{round(0.9 - 0.1 * k, 2)}" for k, w in enumerate(words)]
    (data / "topic_model_28.csv").write_text("\n".join(lines) + "\n")

    # Registry: five institutes per region, two at sea.
    registry, inst_region = [], {}
    places = PLACES[:]
    rng.shuffle(places)
    k = 0
    for rid, _, box in REGIONS:
        for _ in range(5):
            place = places[k]
            name = rng.choice(TEMPLATES).format(place)
            lat, lon = point_in(rng, box)
            gid = f"grid.{1000 + k}"
            aliases = [f"{place} Univ"] if rng.random() < 0.4 else []
            registry.append({"registry_id": gid, "name": name, "aliases": aliases, "lat": lat, "lon": lon})
            inst_region[gid] = rid
            k += 1
    for _ in range(2):
        gid = f"grid.{1000 + k}"
        registry.append({"registry_id": gid, "name": f"{places[k]} Marine Station", "aliases": [],
                         "lat": OCEAN[0], "lon": OCEAN[1]})
        inst_region[gid] = None
        k += 1
    by_region = {rid: [e for e in registry if inst_region[e["registry_id"]] == rid] for rid, _, _ in REGIONS}

    # Pre-verify typo variants: the intended institute must win clearly.
    def affiliation_for(entry):
        r = rng.random()
        if r < 0.6:
            return entry["name"]
        if r < 0.7 and entry["aliases"]:
            return entry["aliases"][0]
        for _ in range(50):
            t = typo(rng, entry["name"])
            if normalize(t) in {normalize(e["name"]) for e in registry}:
                continue
            s = best_scores(t, registry)
            if s[0][1] == entry["registry_id"] and s[0][0] >= 0.8 and s[1][0] <= s[0][0] - 0.08:
                return t
        return entry["name"]

    for noise in NOISE_AFFILIATIONS:
        assert best_scores(noise, registry)[0][0] < 0.7, noise

    regions_sorted = [r for r, _, _ in REGIONS]
    weights = [REGION_WEIGHT[r] for r in regions_sorted]

    papers, truth = [], []
    n_valid = 500
    years = list(range(2006, 2019))
    for i in range(n_valid):
        pid = f"p{i:04d}"
        year = years[i % len(years)]
        subjects = sorted(set(rng.sample(SUBJECTS, rng.choice([1, 1, 2]))))
        n_aff = rng.choice([1, 1, 2, 2, 3])
        affs, regions = [], set()
        for _ in range(n_aff):
            if rng.random() < 0.08:
                affs.append(rng.choice(NOISE_AFFILIATIONS))
                continue
            if rng.random() < 0.05:
                entry = rng.choice([e for e in registry if inst_region[e["registry_id"]] is None])
            else:
                entry = rng.choice(by_region[rng.choices(regions_sorted, weights)[0]])
            affs.append(affiliation_for(entry))
            if inst_region[entry["registry_id"]]:
                regions.add(inst_region[entry["registry_id"]])
        region_factor = max([REGION_DL_FACTOR[r] for r in regions], default=1.0)
        subj_factor = max(SUBJECT_DL_FACTOR[s] for s in subjects)
        p_dl = min(0.9, (0.04 + 0.06 * (year - 2006)) * subj_factor * region_factor)
        dl = rng.random() < p_dl
        short = i % 41 == 17  # a handful of abstracts too short to keep

        pool = [w for s in subjects for t in SUBJECT_TOPICS[s] for w in OTHER_TOPICS[t]]
        if short:
            words = rng.sample(pool, 8)
        else:
            words = [rng.choice(pool) for _ in range(rng.randint(18, 26))]
            words += [rng.choice(GENERIC) for _ in range(rng.randint(8, 12))]
            if rng.random() < 0.3:
                words += rng.sample(SECTORS[rng.choice(sorted(SECTORS))], 2)
        if dl:
            words += ["deep", "neural", "network"] + rng.sample(DL_PHRASES, 2)
        rng.shuffle(words)
        abstract = " ".join(words).capitalize() + "."
        base = 2 + (year - 2006) * 0.15 + (0.6 if dl else 0.0)
        citations = int(rng.lognormvariate(base, 0.9))
        papers.append({"id": pid, "title": f"Study {i}", "abstract": abstract, "subjects": subjects,
                       "pub_year": year, "citations": citations, "affiliations": affs})
        truth.append({"id": pid, "status": "dropped" if short else "ok", "pub_year": year,
                      "citations": citations, "subjects": subjects, "dl": dl and not short,
                      "regions": sorted(regions)})

    # Invalid rows interleaved at fixed positions.
    bad = [
        json.dumps({"id": "bad1", "title": "x", "abstract": "y", "subjects": ["cs.LG"], "pub_year": 2010,
                    "citations": -3, "affiliations": []}),
        json.dumps({"id": "bad2", "title": "x", "abstract": "y", "subjects": ["cs.LG"], "pub_year": 1975,
                    "citations": 1, "affiliations": []}),
        json.dumps({"id": "bad3", "title": "x", "abstract": "y", "subjects": [], "pub_year": 2011,
                    "citations": 1, "affiliations": []}),
        '{"id": "bad4", "title": ',
        json.dumps(dict(papers[10])),  # duplicate id
    ]
    rows = [json.dumps(p) for p in papers]
    for k, b in enumerate(bad):
        rows.insert(37 * (k + 1), b)
    (fixture / "papers.jsonl").write_text("\n".join(rows) + "\n")
    (fixture / "registry.jsonl").write_text("\n".join(json.dumps(e) for e in registry) + "\n")

    # Companies.
    sectors = sorted(SECTORS)
    companies = []
    for i in range(300):
        cats = sorted(set([sectors[i % len(sectors)]] + ([rng.choice(sectors)] if rng.random() < 0.3 else [])))
        words = []
        for c in cats:
            words += [rng.choice(SECTORS[c]) for _ in range(5)]
        words += [rng.choice(BUSINESS) for _ in range(rng.randint(12, 18))]
        rng.shuffle(words)
        if rng.random() < 0.1:
            lat, lon = OCEAN
        else:
            rid = rng.choices(regions_sorted, weights)[0]
            lat, lon = point_in(rng, dict((r, b) for r, _, b in REGIONS)[rid])
        companies.append({"id": f"c{i:04d}", "description": " ".join(words).capitalize() + ".", "categories": cats,
                          "founded_year": 1995 + rng.randrange(25) if rng.random() < 0.8 else None,
                          "lat": lat, "lon": lon})
    (fixture / "companies.jsonl").write_text("\n".join(json.dumps(c) for c in companies) + "\n")

    features = [{"type": "Feature", "properties": {"region_id": rid, "country_code": cc},
                 "geometry": {"type": "Polygon", "coordinates": rect_polygon(box)}} for rid, cc, box in REGIONS]
    (fixture / "boundaries.geojson").write_text(
        json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")

    config = {
        "inputs": {"papers": "papers.jsonl", "registry": "registry.jsonl", "companies": "companies.jsonl",
                   "boundaries": "boundaries.geojson", "topic_model": "../../../data/topic_model_28.csv",
                   "stopwords": "../../../data/stopwords.txt"},
        "output_dir": "out",
        "seed": 2012,
        "labeling": {"gamma": 0.5, "dl_topic_ids": ["dl_0", "dl_1"]},
        "classifier": {"min_examples": 20, "lambda_grid": [0.001, 0.003, 0.01, 0.03]},
        "split": {"t0_max_year": 2012},
        "filters": {"country_floor_percentile": 0, "region_floor_percentile": 0,
                    "concentration_k_country": 1, "concentration_k_region": 2,
                    "dispersion_top_countries": 2, "dispersion_top_regions": 4,
                    "impact_min_years": [2009, 2012, 2015]},
        "regression": {"sample_quantile": 0.0},
    }
    (fixture / "config.json").write_text(json.dumps(config, indent=1) + "\n")
    region_country = {rid: cc for rid, cc, _ in REGIONS}
    (fixture / "truth.json").write_text(json.dumps(
        {"papers": truth, "region_country": region_country, "rejected_rows": len(bad), "config": config},
        indent=0) + "\n")


def write_stopwords(root, header_path):
    """Copies the built-in stop-word list out of the library header."""
    text = header_path.read_text()
    start = text.index("default_stopwords()")
    body = text[text.index("{", text.index("words = ", start)) + 1:text.index("};", start)]
    words = [w.strip().strip('"') for w in body.split(",") if w.strip()]
    (root / "data" / "stopwords.txt").write_text("\n".join(words) + "\n")


if __name__ == "__main__":
    root = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent)
    build(root)
    write_stopwords(root, root / "include" / "gptgeo" / "topics.hpp")
