import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, acceptance_log.N_CRITERIA + 1):
        if n not in acceptance_log.RESULTS:
            terminalreporter.write_line(f"criterion {n}: NOT RUN  (deselected, or errored before a verdict)")
            continue
        ok, detail = acceptance_log.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
