"""Regenerates the golden field profiles with pandas.

Types are decided from the raw text (int, then float, then ISO date,
else string); statistics come from pandas on the typed column.
"""
import json
import pathlib
import sys

import pandas as pd

NULLS = ["", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"]
HERE = pathlib.Path(__file__).resolve().parent


def is_int(s):
    try:
        int(s)
        return True
    except ValueError:
        return False


def is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def kind(values):
    if all(is_int(v) for v in values):
        return "integer"
    if all(is_float(v) for v in values):
        return "float"
    parsed = pd.to_datetime(pd.Series(values), errors="coerce", format="ISO8601")
    if parsed.notna().sum() >= 0.9 * len(values):
        return "date"
    return "string"


def profile(path):
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    fields = []
    for name in raw.columns:
        col = raw[name].str.strip()
        present = col[~col.isin(NULLS)]
        t = kind(list(present))
        entry = {"name": name, "atomic_type": t, "n_rows": len(col), "n_null": int(col.isin(NULLS).sum())}
        if t == "integer":
            nums = present.astype("int64")
            entry.update(min=int(nums.min()), max=int(nums.max()), n_unique=int(nums.nunique()))
        elif t == "float":
            nums = present.astype("float64")
            entry.update(min=float(nums.min()), max=float(nums.max()), n_unique=int(nums.nunique()))
        elif t == "date":
            dates = pd.to_datetime(present, format="ISO8601")
            entry.update(
                min=present[dates.idxmin()], max=present[dates.idxmax()], n_unique=int(present.nunique())
            )
        else:
            entry.update(min=None, max=None, n_unique=int(present.nunique()))
        fields.append(entry)
    return {"dataset": path.stem, "row_count": len(raw), "fields": fields}


if __name__ == "__main__":
    for csv_path in sorted(HERE.parent.glob("*.csv")):
        out = HERE / f"{csv_path.stem}.json"
        out.write_text(json.dumps(profile(csv_path), indent=2) + "\n")
        print(out, file=sys.stderr)
