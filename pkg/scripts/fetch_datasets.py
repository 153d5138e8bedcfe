#!/usr/bin/env python3
"""Download and prepare the benchmark datasets used by the acceptance suite.

Needs network access to archive.ics.uci.edu (run it on your workstation if
the build environment is offline) and writes ready-to-use CSVs into data/:

    spambase.csv    4600 rows, 57 numeric features, binary label
    creditcard.csv  30000 rows, 23 numeric features, binary label
    letter.csv      20000 rows, 16 numeric features, 26-class label
    waveform.csv    5000 rows, 21 numeric features, 3-class label

Waveform is produced by its published generator (the distributed file is
itself generator output), so it needs no download. The credit-card source
is an .xls workbook; converting it needs the ``xlrd`` package.
"""

from __future__ import annotations

import csv
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

DATA = REPO / "data"
UCI = "https://archive.ics.uci.edu/static/public"


def _download_zip(url: str) -> zipfile.ZipFile:
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=120) as resp:
        payload = resp.read()
    return zipfile.ZipFile(io.BytesIO(payload))


def fetch_spambase() -> None:
    out = DATA / "spambase.csv"
    if out.exists():
        print(f"{out} already present")
        return
    bundle = _download_zip(f"{UCI}/94/spambase.zip")
    raw = bundle.read("spambase.data").decode("utf-8").strip().splitlines()
    # the distributed file has 4601 rows; the experiments use 4600
    rows = [line.split(",") for line in raw][:4600]
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(57)] + ["label"])
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")


def fetch_creditcard() -> None:
    out = DATA / "creditcard.csv"
    if out.exists():
        print(f"{out} already present")
        return
    try:
        import xlrd
    except ImportError:
        print("creditcard needs the xlrd package: pip install xlrd", file=sys.stderr)
        return
    bundle = _download_zip(f"{UCI}/350/default+of+credit+card+clients.zip")
    name = next(n for n in bundle.namelist() if n.endswith(".xls"))
    book = xlrd.open_workbook(file_contents=bundle.read(name))
    sheet = book.sheet_by_index(0)
    # row 0 is X1..X23 headers, row 1 is descriptive names, data follows
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(1, 24)] + ["label"])
        for r in range(2, sheet.nrows):
            values = sheet.row_values(r)[1:]  # drop the ID column
            writer.writerow([_fmt(v) for v in values])
    print(f"wrote {out} ({sheet.nrows - 2} rows)")


def _fmt(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def fetch_letter() -> None:
    out = DATA / "letter.csv"
    if out.exists():
        print(f"{out} already present")
        return
    bundle = _download_zip(f"{UCI}/59/letter+recognition.zip")
    raw = bundle.read("letter-recognition.data").decode("utf-8").strip().splitlines()
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["letter"] + [f"x{i}" for i in range(16)])
        writer.writerows(line.split(",") for line in raw)
    print(f"wrote {out} ({len(raw)} rows)")


def generate_waveform() -> None:
    out = DATA / "waveform.csv"
    if out.exists():
        print(f"{out} already present")
        return
    from fedtrees.synth import make_waveform

    shard = make_waveform(n=5000, seed=424242)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([m.name for m in shard.feature_metas] + ["label"])
        for row, y in zip(shard.rows, shard.labels):
            writer.writerow([repr(float(v)) for v in row] + [shard.label_space.classes[y]])
    print(f"wrote {out} (5000 rows)")


def main() -> int:
    DATA.mkdir(exist_ok=True)
    generate_waveform()
    failures = []
    for fetch in (fetch_spambase, fetch_creditcard, fetch_letter):
        try:
            fetch()
        except Exception as e:  # noqa: BLE001 - report and continue
            failures.append((fetch.__name__, e))
            print(f"{fetch.__name__} failed: {e}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
