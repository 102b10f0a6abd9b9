"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

LINES: list[str] = []


def record(number: int, title: str, ok: bool, elapsed: float, limit: float, detail: str = "") -> None:
    within = elapsed <= limit
    verdict = "PASS" if ok and within else "FAIL"
    line = f"{verdict} criterion {number}: {title} ({elapsed:.2f}s / {limit:.0f}s)"
    if detail:
        line += f" - {detail}"
    LINES.append(line)
    print(line)
