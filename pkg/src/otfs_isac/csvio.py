"""CSV serialisation of sweep records.

Floats are written in scientific notation with 10 significant digits, so
output is byte-stable for a fixed configuration and seed.
"""

from __future__ import annotations

import csv
import io
import math

from .sim import SweepRecord

HEADER = (
    "snr_db",
    "crb_threshold",
    "scheme",
    "ber_mc",
    "ber_analytic",
    "ber_lb",
    "crb_achieved",
    "bits",
    "errors",
    "lambda",
    "mu",
    "converged",
)

_FIELDS = (
    "snr_db",
    "crb_threshold",
    "scheme",
    "ber_monte_carlo",
    "ber_analytic",
    "ber_lower_bound",
    "crb_achieved",
    "bits_simulated",
    "bit_errors",
    "dual_lambda",
    "dual_mu",
    "converged",
)


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    text = f"{x:.9e}"
    if math.isinf(float(text)):
        # rounding up past the largest double; step back one unit in the last digit
        text = f"{math.copysign(1.797693134e308, x):.9e}"
    return text


def format_record(record: SweepRecord) -> list[str]:
    row = []
    for name in _FIELDS:
        value = getattr(record, name)
        if name == "scheme":
            row.append(value)
        elif name in ("bits_simulated", "bit_errors"):
            row.append(str(int(value)))
        elif name == "converged":
            row.append("true" if value else "false")
        else:
            row.append(format_float(value))
    return row


def dumps(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow(format_record(r))
    return buf.getvalue()


def write_records(path, records) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(dumps(records))


def parse_row(row: dict) -> SweepRecord:
    if row.get("converged") not in ("true", "false"):
        raise ValueError(f"converged must be 'true' or 'false', got {row.get('converged')!r}")
    return SweepRecord(
        snr_db=float(row["snr_db"]),
        crb_threshold=float(row["crb_threshold"]),
        scheme=row["scheme"],
        ber_monte_carlo=float(row["ber_mc"]),
        ber_analytic=float(row["ber_analytic"]),
        ber_lower_bound=float(row["ber_lb"]),
        crb_achieved=float(row["crb_achieved"]),
        bits_simulated=int(row["bits"]),
        bit_errors=int(row["errors"]),
        dual_lambda=float(row["lambda"]),
        dual_mu=float(row["mu"]),
        converged=row["converged"] == "true",
    )


def loads(text: str) -> list[SweepRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames!r}")
    return [parse_row(row) for row in reader]


def read_records(path) -> list[SweepRecord]:
    with open(path, newline="", encoding="ascii") as fh:
        return loads(fh.read())
