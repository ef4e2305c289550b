from pathlib import Path

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# one line per acceptance criterion, filled in by tests/test_acceptance.py
CRITERIA: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA.setdefault(number, []).append((ok, detail))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        entries = CRITERIA[number]
        ok = all(e[0] for e in entries)
        details = "; ".join(e[1] for e in entries)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {details}")
