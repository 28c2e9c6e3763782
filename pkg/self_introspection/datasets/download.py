"""
MNIST downloader - HTTP client with retries and error handling.

Fetches the four gzip-compressed IDX archives from a mirror. Files already
present in the destination directory are not downloaded again.
"""

import logging
from pathlib import Path

import httpx
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from ..errors import DownloadError
from ..settings import settings

logger = logging.getLogger(__name__)

MNIST_FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)

GZIP_MAGIC = b"\x1f\x8b"


class MnistDownloader:
    """
    Synchronous download client.

    Example:
        ```python
        with MnistDownloader() as downloader:
            paths = downloader.fetch_all(Path("data/mnist"))
        ```
    """

    def __init__(
        self,
        base_url: str | None = None,
        timeout: float | None = None,
        retries: int | None = None,
        retry_delay: float | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = (base_url or settings.mnist_base_url).rstrip("/")
        self.timeout = timeout if timeout is not None else settings.download_timeout
        self.retries = retries if retries is not None else settings.download_retries
        self.retry_delay = (
            retry_delay if retry_delay is not None else settings.download_retry_delay
        )
        self._transport = transport
        self._client: httpx.Client | None = None

    def __enter__(self):
        self._client = self._create_client()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    @property
    def client(self) -> httpx.Client:
        """Get or create HTTP client (lazy initialization)."""
        if self._client is None:
            self._client = self._create_client()
        return self._client

    def _create_client(self) -> httpx.Client:
        return httpx.Client(
            timeout=self.timeout, follow_redirects=True, transport=self._transport
        )

    def _get(self, url: str) -> bytes:
        logger.info(f"HTTP Request: GET {url}")

        def make_request() -> bytes:
            response = self.client.get(url)
            response.raise_for_status()
            logger.info(f"HTTP Response: {response.status_code} {response.reason_phrase}")
            return response.content

        # Retry transport failures and 5xx answers; a 404 will not fix itself
        request_func = retry(
            stop=stop_after_attempt(max(self.retries, 1)),
            wait=wait_fixed(self.retry_delay),
            retry=retry_if_exception_type((httpx.TransportError, _ServerError)),
            reraise=True,
        )(lambda: _raise_for_server_error(make_request))

        try:
            return request_func()
        except (httpx.HTTPStatusError, _ServerError) as e:
            response = e.response
            logger.error(f"HTTP Response: {response.status_code} {response.reason_phrase}")
            raise DownloadError(f"MNIST download failed: HTTP {response.status_code} for {url}") from e
        except httpx.HTTPError as e:
            logger.error(f"HTTP Error: {str(e)}")
            raise DownloadError(f"MNIST download failed for {url}: {str(e)}") from e

    def fetch(self, name: str, dest_dir: Path) -> Path:
        """Download one archive unless it already exists. Returns its path."""
        dest_dir = Path(dest_dir)
        target = dest_dir / name
        if target.exists() and target.stat().st_size > 0:
            logger.info(f"{target} already present, skipping")
            return target

        payload = self._get(f"{self.base_url}/{name}")
        if name.endswith(".gz") and not payload.startswith(GZIP_MAGIC):
            raise DownloadError(f"{name} from {self.base_url} is not a gzip archive")
        dest_dir.mkdir(parents=True, exist_ok=True)
        partial = target.with_suffix(target.suffix + ".part")
        partial.write_bytes(payload)
        partial.replace(target)
        logger.info(f"Saved {len(payload)} bytes to {target}")
        return target

    def fetch_all(self, dest_dir: Path, names: tuple[str, ...] = MNIST_FILES) -> list[Path]:
        return [self.fetch(name, dest_dir) for name in names]

    def close(self):
        """Close the HTTP client."""
        if self._client:
            self._client.close()
            self._client = None


class _ServerError(Exception):
    def __init__(self, response: httpx.Response):
        super().__init__(f"HTTP {response.status_code}")
        self.response = response


def _raise_for_server_error(request):
    try:
        return request()
    except httpx.HTTPStatusError as e:
        if e.response.status_code >= 500:
            raise _ServerError(e.response) from e
        raise


def download_mnist(dest_dir: Path | None = None, **client_options) -> list[Path]:
    """Fetch all four MNIST archives into `dest_dir` (default: the configured data directory)."""
    dest_dir = Path(dest_dir) if dest_dir is not None else settings.data_dir
    with MnistDownloader(**client_options) as downloader:
        return downloader.fetch_all(dest_dir)
