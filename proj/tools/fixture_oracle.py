#!/usr/bin/env python3
"""Expected report tables for the synthetic fixture, derived from truth.json.

Works from the generator's ground truth (which papers survive, their DL flag,
regions, years and citations) and recomputes three report tables with exact
rational arithmetic. It never reads pipeline output.

Usage: python3 tools/fixture_oracle.py [repo_root]
"""

import csv
import json
import math
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path


def nearest_rank(values, q):
    v = sorted(values)
    rank = min(max(math.ceil(q * len(v) - 1e-12), 1), len(v))
    return v[rank - 1]


def median(values):
    v = sorted(values)
    n = len(v)
    return Fraction(v[n // 2]) if n % 2 else Fraction(v[n // 2 - 1] + v[n // 2], 2)


def load(root):
    truth = json.loads((root / "tests/fixtures/synthetic/truth.json").read_text())
    papers = [p for p in truth["papers"] if p["status"] == "ok"]
    rc = truth["region_country"]
    for p in papers:
        p["countries"] = sorted({rc[r] for r in p["regions"]})
    return papers, rc, truth["config"]


def rca_by_region(papers, rc, cfg):
    by_year = defaultdict(list)
    for p in papers:
        by_year[p["pub_year"]].append(p["citations"])
    med = {y: median(c) for y, c in by_year.items() if len(c) >= 2}
    above = [p for p in papers if p["pub_year"] in med and p["citations"] > med[p["pub_year"]]]
    t0_max = cfg["split"]["t0_max_year"]
    floor_pct = cfg["filters"]["region_floor_percentile"]
    rows = []
    for period in ("t0", "t1"):
        sel = [p for p in above if (p["pub_year"] <= t0_max) == (period == "t0")]
        dl, tot = defaultdict(int), defaultdict(int)
        for p in sel:
            for r in p["regions"]:
                tot[r] += 1
                dl[r] += p["dl"]
        if not tot:
            continue
        world_dl, world = sum(dl.values()), sum(tot.values())
        floor = nearest_rank(list(tot.values()), floor_pct / 100)
        for r in sorted(tot):
            if tot[r] < floor or world_dl == 0:
                continue
            rca = Fraction(dl[r], tot[r]) / Fraction(world_dl, world)
            rows.append([r, rc[r], period, dl[r], tot[r], float(rca)])
    return ["location", "country_code", "period", "dl_activity", "total_activity", "rca"], rows


def concentration(papers, cfg):
    by_year = defaultdict(list)
    for p in papers:
        by_year[p["pub_year"]].append(p["citations"])
    p75 = {y: nearest_rank(c, 0.75) for y, c in by_year.items()}
    ks = {"country": cfg["filters"]["concentration_k_country"], "region": cfg["filters"]["concentration_k_region"]}
    rows = []
    for y in sorted(by_year):
        hot = [p for p in papers if p["pub_year"] == y and p["citations"] >= p75[y]]
        for level, key in (("country", "countries"), ("region", "regions")):
            for scope in ("all", "dl"):
                counts = defaultdict(int)
                for p in hot:
                    if scope == "dl" and not p["dl"]:
                        continue
                    for loc in p[key]:
                        counts[loc] += 1
                total = sum(counts.values())
                if total == 0:
                    continue
                k = ks[level]
                top = sum(sorted(counts.values(), reverse=True)[:k])
                rows.append([y, level, scope, k, len(counts), total, float(Fraction(top, total))])
    return ["year", "level", "scope", "k", "locations", "total_activity", "share"], rows


def dl_share(papers, cfg):
    window = cfg.get("filters", {}).get("moving_average_window", 3)
    half = window // 2
    groups = {"all": papers}
    for s in sorted({s for p in papers for s in p["subjects"]}):
        groups[s] = [p for p in papers if s in p["subjects"]]
    rows = []
    for name, sel in groups.items():
        n, d = defaultdict(int), defaultdict(int)
        for p in sel:
            n[p["pub_year"]] += 1
            d[p["pub_year"]] += p["dl"]
        share = {y: Fraction(d[y], n[y]) for y in n}
        for y in sorted(n):
            near = [share[o] for o in n if abs(o - y) <= half]
            rows.append([name, y, n[y], d[y], float(share[y]), float(sum(near) / len(near))])
    return ["subject", "year", "papers", "dl_papers", "share", "moving_average"], rows


def write(path, header, rows):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


if __name__ == "__main__":
    root = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent)
    papers, rc, cfg = load(root)
    out = root / "tests/fixtures/expected"
    out.mkdir(parents=True, exist_ok=True)
    write(out / "rca_by_region.csv", *rca_by_region(papers, rc, cfg))
    write(out / "concentration_timeseries.csv", *concentration(papers, cfg))
    write(out / "dl_share_timeseries.csv", *dl_share(papers, cfg))
