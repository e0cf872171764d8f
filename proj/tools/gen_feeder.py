#!/usr/bin/env python3
"""Writes the bundled 123-bus restoration feeder and its attacked load scenario."""

import argparse
import json
import math
import random
from pathlib import Path

ABC = "abc"

# Impedances in ohm per mile.
THREE_PHASE_R = [[0.4576, 0.1560, 0.1535], [0.1560, 0.4666, 0.1580], [0.1535, 0.1580, 0.4615]]
THREE_PHASE_X = [[1.0780, 0.5017, 0.3849], [0.5017, 1.0482, 0.4236], [0.3849, 0.4236, 1.0651]]
TWO_PHASE_R = 0.4666
TWO_PHASE_M_R = 0.1580
TWO_PHASE_X = 1.0482
TWO_PHASE_M_X = 0.4236
ONE_PHASE_R = 1.3292
ONE_PHASE_X = 1.3475

# Zones: (tree edges as (parent, child, phases)), keyed by a short name.
ZONES = {
    "mg1": [(8, 9, "a"), (8, 12, "b"), (8, 13, ABC), (9, 14, "a"), (14, 10, "a"), (14, 11, "a")],
    "z1": [(149, 1, ABC), (1, 2, "b"), (1, 3, ABC), (3, 4, "c"), (3, 5, ABC), (5, 6, "c"), (1, 7, ABC)],
    "z150": [],
    "z34": [(34, 15, "c"), (15, 16, "c"), (15, 17, "c")],
    "mg2": [(18, 19, ABC), (19, 20, "a")],
    "z21": [(21, 22, "b"), (21, 23, ABC), (23, 24, "c"), (23, 25, ABC), (25, 26, ABC), (26, 27, "ac"),
            (27, 33, "a"), (26, 31, ABC), (31, 32, "c")],
    "z28": [(28, 29, ABC), (29, 30, ABC), (30, 115, ABC)],
    "z135": [(135, 35, ABC), (35, 36, "ab"), (36, 37, "a"), (36, 38, "b"), (38, 39, "b"), (35, 40, ABC),
             (40, 41, "c"), (40, 42, ABC), (42, 43, "b")],
    "z44": [(44, 45, "a"), (45, 46, "a"), (44, 47, ABC), (47, 48, ABC)],
    "z49": [(49, 50, ABC), (50, 51, ABC), (51, 118, ABC)],
    "mg3": [(60, 62, ABC)],
    "z52": [(152, 52, ABC), (52, 53, ABC), (53, 54, ABC), (54, 55, ABC), (55, 56, ABC), (54, 57, ABC),
            (57, 58, "b"), (58, 59, "b")],
    "z61": [],
    "z63": [(63, 64, ABC)],
    "z65": [(65, 66, ABC)],
    "mg4": [(72, 73, "c"), (73, 74, "c"), (74, 75, "c"), (72, 76, ABC)],
    "z67": [(160, 67, ABC), (67, 68, "a"), (68, 69, "a"), (67, 70, ABC), (70, 71, "a"), (67, 97, ABC),
            (97, 98, ABC), (98, 99, ABC), (99, 100, ABC), (100, 117, ABC)],
    "z77": [(77, 78, ABC), (78, 79, ABC), (78, 80, ABC)],
    "z86": [(86, 87, ABC), (87, 88, "a"), (87, 89, ABC), (89, 90, ABC), (89, 91, ABC), (91, 92, "a")],
    "z81": [(81, 82, ABC), (82, 83, ABC), (81, 84, "c"), (84, 85, "c")],
    "z93": [(93, 94, "a"), (93, 95, ABC), (95, 96, "b")],
    "z101": [(101, 102, "c"), (102, 103, "c"), (103, 104, "c"), (101, 105, ABC), (105, 106, "b"),
             (106, 107, "b")],
    "z108": [(108, 109, ABC), (109, 110, ABC), (110, 111, "a"), (110, 112, "a"), (112, 113, "a"),
             (113, 114, "a"), (108, 116, ABC)],
}
ROOT_PHASES = {8: ABC, 149: ABC, 150: ABC, 34: "c", 18: ABC, 21: ABC, 28: ABC, 135: ABC, 44: ABC, 49: ABC,
               60: ABC, 152: ABC, 61: ABC, 63: ABC, 65: ABC, 72: ABC, 160: ABC, 77: ABC, 86: ABC, 81: ABC,
               93: ABC, 101: ABC, 108: ABC}

SWITCHES = [(7, 8, ABC), (150, 149, ABC), (13, 34, "c"), (18, 21, ABC), (25, 28, ABC), (18, 135, ABC),
            (42, 44, ABC), (47, 49, ABC), (57, 60, ABC), (60, 61, ABC), (62, 63, ABC), (64, 65, ABC),
            (67, 72, ABC), (76, 77, ABC), (76, 86, ABC), (80, 81, ABC), (91, 93, ABC), (97, 101, ABC),
            (105, 108, ABC), (13, 152, ABC), (60, 160, ABC)]

GFM_BUSES = [13, 19, 60, 76]
GFL_ONE_PHASE = [7, 15, 41, 46, 47, 51, 61, 64, 69, 82, 93, 97, 103]
GFL_THREE_PHASE = [5, 23, 29, 31, 57, 70, 80, 90, 110]

COMMERCIAL = ["FullSrvcRestaurant", "MidriseApartment", "QuickSrvcRestaurant", "SmallHotel"]
RESIDENTIAL = ["BASE", "HIGH", "LOW"]

# Attacked loads: bus -> (phase, nominal kW, profile).
ATTACKED = {12: ("b", 120.0, "HIGH"), 21: ("a", 150.0, "BASE"), 46: ("a", 150.0, "HIGH"),
            66: ("a", 150.0, "BASE"), 75: ("c", 120.0, "LOW"), 92: ("a", 140.0, "HIGH"),
            99: ("a", 140.0, "BASE")}

# Hour-of-day shape applied to nominal demand in the scenario series.
HOURLY_SHAPE = {8: 0.92, 9: 0.97, 10: 1.0}

# Forecast shortfall of each attacked load per stage (kW); the true load is this much higher.
DEVIATION_KW = {12: [3.0, 3.0, 3.0], 21: [3.0, 3.0, 3.0], 46: [12.0, 12.0, 12.0], 66: [12.0, 12.0, 12.0],
                75: [4.0, 4.0, 4.0], 92: [5.0, 5.0, 5.0], 99: [2.0, 2.0, 2.0]}


def matrix(phases, self_r, mut_r):
    idx = [ABC.index(p) for p in phases]
    m = [[0.0] * 3 for _ in range(3)]
    for i in idx:
        for k in idx:
            m[i][k] = self_r if i == k else mut_r
    return m


def line_impedance(phases, miles):
    if len(phases) == 3:
        r = [[v * miles for v in row] for row in THREE_PHASE_R]
        x = [[v * miles for v in row] for row in THREE_PHASE_X]
    elif len(phases) == 2:
        r = matrix(phases, TWO_PHASE_R * miles, TWO_PHASE_M_R * miles)
        x = matrix(phases, TWO_PHASE_X * miles, TWO_PHASE_M_X * miles)
    else:
        r = matrix(phases, ONE_PHASE_R * miles, 0.0)
        x = matrix(phases, ONE_PHASE_X * miles, 0.0)
    return r, x


def build_feeder(seed):
    rng = random.Random(seed)
    bus_phases = dict(ROOT_PHASES)
    lines = []
    for edges in ZONES.values():
        for parent, child, phases in edges:
            bus_phases[child] = phases
            r, x = line_impedance(phases, rng.choice([0.05, 0.075, 0.1, 0.125]))
            rating = 1500.0 if len(phases) == 3 else 900.0
            lines.append({"id": f"L{parent}_{child}", "from": parent, "to": child, "phases": phases,
                          "r_ohm": r, "x_ohm": x, "pmax_kw": rating, "qmax_kvar": rating})
    for a, b, phases in SWITCHES:
        r, x = line_impedance(phases, 0.01)
        lines.append({"id": f"S{a}_{b}", "from": a, "to": b, "phases": phases, "r_ohm": r, "x_ohm": x,
                      "pmax_kw": 1500.0, "qmax_kvar": 1500.0, "switch": True})

    buses = [{"id": b, "phases": bus_phases[b]} for b in sorted(bus_phases)]
    ibrs = []
    for b in GFM_BUSES:
        ibrs.append({"id": f"GFM{b}", "bus": b, "kind": "GFM", "phases": ABC, "pmax_kw": 500.0,
                     "qmax_kvar": 250.0,
                     "ramp": {"mls_kw": 10.0, "sens_kw_per_hz": 20.0, "f_nadir": 59.8, "f_min": 59.5}})
    for b in GFL_ONE_PHASE:
        ibrs.append({"id": f"GFL{b}", "bus": b, "kind": "GFL", "phases": bus_phases[b][0], "pmax_kw": 400.0,
                     "qmax_kvar": 200.0})
    for b in GFL_THREE_PHASE:
        ibrs.append({"id": f"GFL{b}", "bus": b, "kind": "GFL", "phases": ABC, "pmax_kw": 500.0,
                     "qmax_kvar": 250.0})

    loads = []
    profiles = COMMERCIAL + RESIDENTIAL
    for i, b in enumerate(sorted(bus_phases)):
        if b in (34, 150):
            continue
        if b in ATTACKED:
            phase, nominal, profile = ATTACKED[b]
            weight = 1.0
        else:
            ph = bus_phases[b]
            phase = ph if len(ph) < 3 or i % 3 == 0 else ph[i % 3]
            nominal = round(rng.uniform(40.0, 80.0), 1)
            profile = profiles[i % len(profiles)]
            weight = 2.0 if i % 11 == 0 else 1.0
        kind = "commercial" if profile in COMMERCIAL else "residential"
        loads.append({"id": f"L{b}", "bus": b, "phases": phase, "weight": weight, "profile": profile,
                      "type": kind, "attacked": b in ATTACKED, "nominal_kw": nominal})
    return {"base": {"kva": 1000.0, "kv": 4.16}, "buses": buses, "lines": lines, "ibrs": ibrs, "loads": loads}


def build_scenario(feeder):
    hours = sorted(HOURLY_SHAPE)
    attacked, actual = {}, {}
    for load in feeder["loads"]:
        series = [round(load["nominal_kw"] * HOURLY_SHAPE[h], 3) for h in hours]
        bus = load["bus"]
        dev = DEVIATION_KW.get(bus, [0.0] * len(hours))
        actual[load["id"]] = series
        attacked[load["id"]] = [round(v - d, 3) for v, d in zip(series, dev)]
    return {"stages": len(hours), "start_hour": hours[0], "stage_minutes": 60.0,
            "attacked_kw": attacked, "actual_kw": actual}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    ap.add_argument("--seed", type=int, default=123)
    args = ap.parse_args()
    feeder = build_feeder(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "scenarios").mkdir(exist_ok=True)
    (args.out / "ieee123_restoration.json").write_text(json.dumps(feeder, indent=1) + "\n")
    (args.out / "scenarios" / "ieee123_attacked.json").write_text(json.dumps(build_scenario(feeder), indent=1) + "\n")
    count = len(feeder["buses"])
    if count != 123:
        raise SystemExit(f"expected 123 buses, built {count}")


if __name__ == "__main__":
    main()
