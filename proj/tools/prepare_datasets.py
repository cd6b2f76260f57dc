"""Write the public benchmark datasets as dyncart dataset files (CSV plus sidecar)."""

import argparse
import csv
import io
import json
import sys
import urllib.request
from pathlib import Path

ADULT_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data"
ADULT_COLUMNS = [
    ("age", "numeric"),
    ("workclass", "categorical"),
    ("fnlwgt", "numeric"),
    ("education", "categorical"),
    ("education_num", "numeric"),
    ("marital_status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "categorical"),
    ("capital_gain", "numeric"),
    ("capital_loss", "numeric"),
    ("hours_per_week", "numeric"),
    ("native_country", "categorical"),
]


def write_dataset(stem, columns, rows, classes, target, source):
    """columns: [(name, kind, categories)], rows: [(values, class name)]."""
    stem.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c[0] for c in columns] + [target])
    for values, label in rows:
        writer.writerow([repr(float(v)) if kind == "numeric" else v for v, (_, kind, _) in zip(values, columns)] + [label])
    stem.with_suffix(".csv").write_text(buf.getvalue())
    schema_cols = []
    for name, kind, cats in columns:
        col = {"name": name, "kind": kind}
        if kind == "categorical":
            col["categories"] = cats
        schema_cols.append(col)
    meta = {
        "format_version": 1,
        "rows": len(rows),
        "schema": {"columns": schema_cols, "target": target, "classes": classes, "positive_class": 1},
        "ids": list(range(len(rows))),
        "provenance": {"source": source},
        "noise_mask": None,
    }
    stem.with_suffix(".meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    print(f"wrote {stem}.csv: {len(rows)} rows, {len(columns)} features")


def breast_cancer(out):
    from sklearn.datasets import load_breast_cancer

    data = load_breast_cancer()
    names = [n.replace(" ", "_") for n in data.feature_names]
    # sklearn codes malignant as 0; make malignant the positive class.
    classes = ["benign", "malignant"]
    rows = [(list(x), "malignant" if t == 0 else "benign") for x, t in zip(data.data, data.target)]
    write_dataset(out / "breast_cancer", [(n, "numeric", None) for n in names], rows, classes, "diagnosis", "sklearn")


def adult(out, url):
    try:
        with urllib.request.urlopen(url, timeout=30) as resp:
            text = resp.read().decode("utf-8")
    except OSError as e:
        print(f"skipping adult: cannot download {url} ({e})", file=sys.stderr)
        return False
    rows = []
    for record in csv.reader(io.StringIO(text), skipinitialspace=True):
        if len(record) != len(ADULT_COLUMNS) + 1:
            continue
        values = ["unknown" if v == "?" else v for v in record[:-1]]
        rows.append((values, record[-1].rstrip(".")))
    columns = []
    for i, (name, kind) in enumerate(ADULT_COLUMNS):
        cats = sorted({r[0][i] for r in rows}) if kind == "categorical" else None
        columns.append((name, kind, cats))
    write_dataset(out / "adult", columns, rows, ["<=50K", ">50K"], "income", "uci-adult")
    return True


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("data"))
    parser.add_argument("--adult-url", default=ADULT_URL)
    parser.add_argument("--skip-adult", action="store_true")
    args = parser.parse_args()
    breast_cancer(args.out)
    if not args.skip_adult:
        adult(args.out, args.adult_url)


if __name__ == "__main__":
    main()
