"""Collects one pass/fail line per acceptance criterion for the session summary."""

LINES: list[str] = []


def record(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    LINES.append(line)
    print(line)
