"""
Process-level settings using pydantic-settings

Environment variables are automatically loaded and take precedence over defaults.
Field names are converted to uppercase and prefixed with SINT_ for env var lookup:
- output_dir → SINT_OUTPUT_DIR
- data_dir → SINT_DATA_DIR
- sentry_dsn → SINT_SENTRY_DSN
etc.

Environment variables can be set:
1. Directly in the environment (highest priority)
2. In a .env file in the project root
3. As default values in the class (lowest priority)

Run-specific choices (architectures, schedules, seeds) live in the YAML run
configuration instead, see config.py.
"""

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class IntrospectionSettings(BaseSettings):
    """
    Settings that describe the machine rather than the experiment.

    Example: export SINT_DATA_DIR="/data/mnist"
    """

    model_config = SettingsConfigDict(
        env_prefix="SINT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_ignore_empty=True,
    )

    # Filesystem
    output_dir: Path = Path("runs")
    data_dir: Path = Path("data/mnist")

    # MNIST mirror used by `self-introspect fetch`
    mnist_base_url: str = "https://ossci-datasets.s3.amazonaws.com/mnist"
    download_timeout: float = 60.0
    download_retries: int = 3
    download_retry_delay: float = 2.0

    # Threads used to shard read-only forward passes
    workers: int = 1

    log_level: str = "INFO"

    # Sentry configuration (optional)
    sentry_dsn: str | None = None
    sentry_traces_sample_rate: float = 0.0
    sentry_send_default_pii: bool = False
    sentry_enable_logs: bool = True


# Global settings instance
settings = IntrospectionSettings()
