"""
Sentry configuration and initialization
Must be called by the CLI before any command runs so training failures are reported.
"""

import logging
import os

import sentry_sdk
from sentry_sdk.integrations.httpx import HttpxIntegration

from .settings import IntrospectionSettings, settings

log = logging.getLogger(__name__)


def init_sentry(config: IntrospectionSettings = settings) -> bool:
    """
    Initialize Sentry if a DSN is provided.

    Returns True when Sentry was initialized.
    """
    if not config.sentry_dsn:
        log.debug("Sentry DSN not provided, skipping Sentry initialization")
        return False

    sentry_sdk.init(
        dsn=config.sentry_dsn,
        send_default_pii=config.sentry_send_default_pii,
        enable_logs=config.sentry_enable_logs,
        traces_sample_rate=config.sentry_traces_sample_rate,
        integrations=[
            # Tracks the MNIST downloads made by `fetch`
            HttpxIntegration(),
        ],
        environment=os.getenv("ENVIRONMENT", "local"),
    )
    log.info(
        "Sentry initialized with HTTPX integration. "
        f"Tracing: {config.sentry_traces_sample_rate * 100}%, "
        f"Logs: {'enabled' if config.sentry_enable_logs else 'disabled'}"
    )
    return True
