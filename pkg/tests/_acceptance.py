"""Collects one result line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number, title, ok, detail):
    RESULTS[number] = f"ACCEPTANCE {number:02d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    return ok
