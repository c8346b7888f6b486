"""
Logging configuration for engagement analytics.

This module sets up the loguru sinks used across the package and installs a
filter that keeps secrets (the GitHub token) out of every log line.

Documentation:
- Loguru: https://github.com/Delgan/loguru#readme

Sample Input:
  from engagement_analytics.logger import configure, logger
  configure({"log_level": "DEBUG", "log_file": "logs/run.log"})
  logger.info("Stage efa started")

Expected Output:
  2025-05-19 14:30:45.123 | INFO     | engagement_analytics.pipeline:run:42 - Stage efa started
"""

import sys
from typing import Any, Dict, Set

from loguru import logger

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)

_secrets: Set[str] = set()


def register_secret(value: str) -> None:
    """Never let ``value`` appear in a log message."""
    if value:
        _secrets.add(value)


def _redact(record: Dict[str, Any]) -> bool:
    message = record["message"]
    for secret in _secrets:
        if secret in message:
            message = message.replace(secret, "***")
    record["message"] = message
    return True


def configure(config: Dict[str, Any]) -> None:
    """
    Configure the logger with custom settings.

    Args:
        config: Dictionary with keys like log_level, log_file, log_rotation,
            log_retention, log_compression and file_log_level.
    """
    logger.remove()

    level = config.get("log_level", "INFO")
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=level, filter=_redact)

    log_file = config.get("log_file")
    if log_file:
        logger.add(
            log_file,
            rotation=config.get("log_rotation", "10 MB"),
            retention=config.get("log_retention", "1 week"),
            compression=config.get("log_compression", "zip"),
            level=config.get("file_log_level", "DEBUG"),
            filter=_redact,
        )


configure({})


if __name__ == "__main__":
    all_validation_failures = []
    total_tests = 0

    # Test 1: console sink present
    total_tests += 1
    try:
        logger.info("Test log message")
        assert logger._core.handlers, "Logger should have at least one handler"
    except Exception as e:
        all_validation_failures.append(f"Basic logging test failed: {str(e)}")

    # Test 2: secrets are redacted
    total_tests += 1
    try:
        register_secret("ghp_example")
        record: Dict[str, Any] = {"message": "token ghp_example in use"}
        _redact(record)
        assert record["message"] == "token *** in use", record["message"]
    except Exception as e:
        all_validation_failures.append(f"Redaction test failed: {str(e)}")

    if all_validation_failures:
        print(f"❌ VALIDATION FAILED - {len(all_validation_failures)} of {total_tests} tests failed:")
        for failure in all_validation_failures:
            print(f"  - {failure}")
        sys.exit(1)
    else:
        print(f"✅ VALIDATION PASSED - All {total_tests} tests produced expected results")
