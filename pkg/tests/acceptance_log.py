"""Collects one line per acceptance criterion for the end-of-run summary."""

LINES: list[str] = []


def log(line: str) -> None:
    LINES.append(line)
    print(line)
