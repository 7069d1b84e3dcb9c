"""Shared verdict table for the acceptance run, printed by the conftest summary hook."""
import sys

N_CRITERIA = 9
RESULTS: dict[int, tuple[bool, str]] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}", file=sys.__stdout__, flush=True)
    assert ok, f"criterion {n}: {detail}"
