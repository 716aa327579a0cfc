import json
import logging
import re

from choquetrl.runlog import OPERATIONS_LOG, RUN_HISTORY, log_dir, log_run, setup_logging


def test_operations_log_format(isolated_home):
    logger = setup_logging(verbose=0)
    logging.getLogger("choquetrl.main").info("maximize finished", extra={"stage": "maximize"})
    logger.debug("not written")
    text = (log_dir() / OPERATIONS_LOG).read_text()
    assert log_dir() == isolated_home / "logs"
    assert re.fullmatch(r"\[\d{4}-\d\d-\d\dT[\d:.]+\] \[choquetrl\.main\] \[maximize\] maximize finished\n", text)


def test_console_level_follows_verbosity():
    levels = [setup_logging(verbose=v, log_to_file=False).handlers[0].level for v in (0, 1, 2, 5)]
    assert levels == [logging.WARNING, logging.INFO, logging.DEBUG, logging.DEBUG]


def test_no_file_logging(isolated_home):
    logger = setup_logging(log_to_file=False)
    assert len(logger.handlers) == 1
    assert not (isolated_home / "logs").exists()


def test_run_history_appends(isolated_home):
    log_run("maximize", {"distortion": {"kind": "gini"}}, {"max_value": 0.5}, 0)
    log_run("validate", {"distortion": {"kind": "piecewise"}}, {"ok": False}, 2)
    runs = json.loads((log_dir() / RUN_HISTORY).read_text())
    assert [r["command"] for r in runs] == ["maximize", "validate"]
    assert runs[1]["exit_code"] == 2
    assert runs[0]["results"] == {"max_value": 0.5}
    assert set(runs[0]) == {"timestamp", "command", "params", "results", "exit_code"}


def test_corrupted_history_starts_over(isolated_home):
    history = log_dir() / RUN_HISTORY
    history.parent.mkdir(parents=True)
    history.write_text("{not json")
    log_run("eval", {}, {"phi": 1.0}, 0)
    assert len(json.loads(history.read_text())) == 1
