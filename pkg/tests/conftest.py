"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_RESULTS = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        entry["ran"] = True
        if call.excinfo is not None:
            entry["ok"] = False
            entry["notes"].append(call.excinfo.exconly().splitlines()[0][:160])
    if call.when == "teardown":
        for key, value in item.user_properties:
            if key == "measured":
                entry["notes"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["ok"] and entry["ran"] else ("FAIL" if entry["ran"] else "SKIP")
        line = f"criterion {number}: {status}  {entry['title']}"
        if entry["notes"]:
            line += "  [" + "; ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)
