#!/usr/bin/env python3
"""Regenerate the West Leeds dataset files that live in this directory.

The script is the single source of truth for every reconstruction choice
baked into the shipped files, so the data can be audited or rebuilt with
different assumptions:

* Clinic roster: 37 general practices in west Leeds with their remotely
  monitored cardiac (ECG) and fall-detection patient counts; totals are
  669 ECG and 140 fall patients.
* Radio access: 26 LTE towers. Each clinic can attach to three towers —
  clinic i (in roster order) reaches towers i, i+6 and i+17 (mod 26).
  The study area pins clinics and towers on a map but not the
  attachment matrix, so this spread is a reconstruction. The offsets
  {0, 6, 17} were chosen so that (a) all six pairwise differences mod
  26 are distinct and at least 6, hence any two clinics share at most
  one tower and the first six clinics' tower sets are pairwise
  disjoint, and (b) the fall-detection load — the tightest workload, at
  roughly six patients per tower's optical uplink — still admits a
  feasible tower assignment (checked by max-flow over the bipartite
  attachment graph). A radio link carries at most the tower's full
  telehealth allowance: 360 resource blocks x 336 b/s = 120,960 b/s.
* Healthcare slice: telehealth is budgeted 0.3% of each wired
  interface's line rate. GPON links are additionally split 32 ways at
  the OLT, giving each ONU 1.25 Gb/s x 0.3% / 32 = 117,187.5 b/s
  upstream and 2.5 Gb/s x 0.3% / 32 = 234,375 b/s downstream. The same
  0.3% rule sets every other hop (1 GbE tower backhaul, 10 GbE OLT
  uplink, 40/100 GbE metro and core, 320 Gb/s cloud fabric, 1.8 Gb/s
  content-server port).
* Wired aggregation is a single chain — OLT, metro switch, aggregation
  router, core router, cloud gateway, cloud switch, content server,
  archive — matching a one-central-office deployment.

Because the attachment matrix and per-link telehealth allowances are
reconstructions, absolute energy totals computed on these files carry
that modeling uncertainty; relative comparisons (fog vs cloud, sweep
trends) are the meaningful outputs. Scenario files repeat this caveat
in their `note` field so it lands in every results row.

The reduced topology keeps the first six clinics (109 ECG / 17 fall
patients) and marks only each clinic's first-tower ONU plus the OLT as
hosting candidates — 7 candidates, small enough for the exhaustive
branch-and-bound solver. Those six clinics' tower sets are pairwise
disjoint, so no tower consolidation is possible and the aggregation
point is the only place patients can share equipment.
"""

import csv
import json
from pathlib import Path

HERE = Path(__file__).resolve().parent

# (clinic, ecg patients, fall patients) — roster order is the attachment
# order used by towers_of().
CLINICS = [
    ("Craven Road Medical Practice", 20, 3),
    ("Hyde Park Surgery", 18, 1),
    ("Laurel Bank Surgery", 13, 1),
    ("Burley Park Medical Centre", 23, 4),
    ("Gildersome Health Centre", 6, 2),
    ("Leigh View Medical Practice", 29, 6),
    ("Hillfoot Surgery", 13, 2),
    ("Pudsey Health Centre", 13, 4),
    ("Dr. S M Chen & Partner", 8, 2),
    ("Hawthorn Surgery", 10, 3),
    ("High Field Surgery", 14, 3),
    ("Vesper Road Surgery", 11, 2),
    ("Manor Park Surgery", 27, 7),
    ("Dr. G Leeds & Partners", 25, 4),
    ("Guiselley and Yeadon Medical Practice", 21, 6),
    ("Yeadon Tarn Medical Practice", 12, 4),
    ("Dr. KJ Manock & Partners", 44, 11),
    ("Dr. JA Browne's Practice", 28, 6),
    ("Dr. JJ McPeakes Practice", 6, 2),
    ("Leeds Student Practice", 68, 0),
    ("Burton Croft Surgery", 20, 4),
    ("Kirkstall Lane Medical Centre", 15, 1),
    ("Thornton Medical Centre", 16, 5),
    ("The Dekeyser Group Practice", 30, 8),
    ("West Lodge Surgery", 32, 13),
    ("Dr. KW McGechaen & Partner", 8, 2),
    ("Robin Lane Medical Centre", 24, 6),
    ("Beech Tree Medical Centre", 4, 1),
    ("Priory View Medical Centre", 16, 6),
    ("Abbey Grange Medical Centre", 16, 4),
    ("Fieldhead Surgery", 10, 1),
    ("The Highfield Medical Centre", 9, 2),
    ("Dr. F Gupta's Practice", 6, 1),
    ("Park Road & Menston", 19, 6),
    ("Rawdon Surgery", 14, 4),
    ("Whitehall Surgery", 16, 2),
    ("Dr. N Saddiq's Practice", 5, 1),
]

TOWERS = 26

# Telehealth slice: 0.3% of each interface's line rate.
RADIO_BPS = 120_960.0  # 360 resource blocks x 336 b/s
TOWER_BACKHAUL_BPS = 3.0e6  # 1 GbE
GPON_UP_BPS = 117_187.5  # 1.25 Gb/s GPON upstream, 32-way split
GPON_DOWN_BPS = 234_375.0  # 2.5 Gb/s GPON downstream, 32-way split
OLT_UPLINK_BPS = 3.0e7  # 10 GbE
METRO_BPS = 1.2e8  # 40 GbE
CORE_BPS = 3.0e8  # 100 GbE
CLOUD_FABRIC_BPS = 9.6e8  # 320 Gb/s
SERVER_PORT_BPS = 5.4e6  # 1.8 Gb/s content-server port


def towers_of(i: int) -> list[int]:
    return sorted({i % TOWERS, (i + 6) % TOWERS, (i + 17) % TOWERS})


def both_ways(a: str, b: str, bps: float) -> list[dict]:
    return [
        {"a": a, "b": b, "capacity_bps": bps},
        {"a": b, "b": a, "capacity_bps": bps},
    ]


def build_topology(clinics: list[tuple[str, int, int]], candidate_onus: set[int] | None) -> dict:
    """candidate_onus=None marks every ONU; otherwise only the given tower
    indices (plus the OLT, always) may host processing servers."""
    used_towers = sorted({t for i in range(len(clinics)) for t in towers_of(i)})

    nodes = []
    for name, ecg, fall in clinics:
        node = {"id": name, "kind": "Clinic"}
        if ecg:
            node["patients_ecg"] = ecg
        if fall:
            node["patients_fall"] = fall
        nodes.append(node)
    for t in used_towers:
        nodes.append({"id": f"bs{t + 1:02}", "kind": "BaseStation"})
    for t in used_towers:
        onu = {"id": f"onu{t + 1:02}", "kind": "Onu"}
        if candidate_onus is None or t in candidate_onus:
            onu["fog_candidate"] = True
        nodes.append(onu)
    nodes += [
        {"id": "olt", "kind": "Olt", "fog_candidate": True},
        {"id": "cas", "kind": "CenterAggSwitch"},
        {"id": "ar", "kind": "AggRouter"},
        {"id": "cr", "kind": "CoreRouter"},
        {"id": "clr", "kind": "CloudRouter"},
        {"id": "cls", "kind": "CloudSwitch"},
        {"id": "cs", "kind": "ContentServer"},
        {"id": "cst", "kind": "CloudStorage"},
    ]

    links = []
    for i, (name, _, _) in enumerate(clinics):
        for t in towers_of(i):
            links += both_ways(name, f"bs{t + 1:02}", RADIO_BPS)
    for t in used_towers:
        links += both_ways(f"bs{t + 1:02}", f"onu{t + 1:02}", TOWER_BACKHAUL_BPS)
    for t in used_towers:
        links.append({"a": f"onu{t + 1:02}", "b": "olt", "capacity_bps": GPON_UP_BPS})
        links.append({"a": "olt", "b": f"onu{t + 1:02}", "capacity_bps": GPON_DOWN_BPS})
    links += both_ways("olt", "cas", OLT_UPLINK_BPS)
    links += both_ways("cas", "ar", METRO_BPS)
    links += both_ways("ar", "cr", CORE_BPS)
    links += both_ways("cr", "clr", CORE_BPS)
    links += both_ways("clr", "cls", CLOUD_FABRIC_BPS)
    # The server pool and the archive attach through the switching fabric;
    # a single server's port rate enters the model as the storage-line
    # share in the rate derivation, while these links cap the aggregate of
    # every co-located server's flows.
    links += both_ways("cls", "cs", CLOUD_FABRIC_BPS)
    links += both_ways("cs", "cst", CLOUD_FABRIC_BPS)

    return {"nodes": nodes, "links": links}


def write_roster(path: Path, clinics: list[tuple[str, int, int]]) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["clinic", "patients_ecg", "patients_fall"])
        w.writerows(clinics)


def write_topology(path: Path, topo: dict) -> None:
    path.write_text(json.dumps(topo, indent=2) + "\n")


def main() -> None:
    ecg_total = sum(c[1] for c in CLINICS)
    fall_total = sum(c[2] for c in CLINICS)
    assert (len(CLINICS), ecg_total, fall_total) == (37, 669, 140)

    write_roster(HERE / "clinics.csv", CLINICS)
    write_topology(HERE / "west_leeds.json", build_topology(CLINICS, None))

    reduced = CLINICS[:6]
    first_tower = {towers_of(i)[0] for i in range(len(reduced))}
    # The first six clinics' tower sets must stay pairwise disjoint for
    # the reduced instance to isolate the aggregation point.
    seen: set[int] = set()
    for i in range(len(reduced)):
        ts = set(towers_of(i))
        assert not (ts & seen)
        seen |= ts
    write_roster(HERE / "clinics_reduced.csv", reduced)
    write_topology(HERE / "west_leeds_reduced.json", build_topology(reduced, first_tower))

    print(f"wrote clinics.csv ({len(CLINICS)} clinics, {ecg_total} ECG / {fall_total} fall)")
    print(f"wrote west_leeds.json / west_leeds_reduced.json next to {HERE}")


if __name__ == "__main__":
    main()
