"""
GitHub REST v3 ingestion with pagination, rate-limit bookkeeping and record/replay.

An ApiSession wraps an httpx.AsyncClient. It never issues a request while the
remaining budget is zero before the reset instant, caps in-flight requests with
a semaphore, retries transport failures with exponential backoff plus jitter
(five attempts) and can record every response to a cassette directory for
deterministic replay.

Documentation:
- httpx async client: https://www.python-httpx.org/async/
- httpx transports: https://www.python-httpx.org/advanced/transports/
- GitHub REST pagination: https://docs.github.com/en/rest/using-the-rest-api/using-pagination-in-the-rest-api
- GitHub REST rate limits: https://docs.github.com/en/rest/using-the-rest-api/rate-limits-for-the-rest-api

Sample Input:
  async with ApiSession(token=os.environ["GITHUB_TOKEN"]) as session:
      record = await fetch_repository(session, "psf", "requests")

Expected Output:
  RepositoryRecord(owner='psf', name='requests', commits=6300, contributors=740, ...)
"""

import asyncio
import json
import random
import re
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Literal, Optional, Tuple, TypeVar

import httpx
from loguru import logger
from pydantic import BaseModel, Field, SecretStr, ValidationError

from engagement_analytics.core_model import RepositoryRecord
from engagement_analytics.errors import (
    DataError,
    Forbidden,
    IncompleteRecord,
    NetworkFailure,
    NotFound,
    RateLimited,
)
from engagement_analytics.logger import register_secret

BASE_URL = "https://api.github.com"
PER_PAGE = 100
MAX_ATTEMPTS = 5

T = TypeVar("T")


class ResolutionPolicy(BaseModel):
    """How 'successfully closed' pull requests and issues are counted on live data."""

    pull_requests: Literal["merged", "closed"] = Field(
        "merged",
        description="'merged' counts PRs with merged_at set; 'closed' also counts closed unmerged PRs.",
    )
    issues: Literal["closed", "completed"] = Field(
        "closed",
        description="'closed' counts every closed issue; 'completed' requires state_reason == 'completed'.",
    )


async def gather_all(*awaitables: Awaitable[T]) -> List[T]:
    """
    Await all of ``awaitables`` concurrently, keeping input order.

    If one raises, the others are cancelled and awaited before the error
    propagates, so no request keeps running after a failed listing.
    """
    tasks = [asyncio.ensure_future(a) for a in awaitables]
    try:
        return list(await asyncio.gather(*tasks))
    except BaseException:
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        raise


class ApiSession:
    """
    Authenticated GitHub session with request-budget bookkeeping.

    Attributes:
        remaining_budget: Requests left in the current window, None until the first response
        reset_at: Epoch seconds at which the budget resets
        max_concurrent_requests: Upper bound on in-flight requests
    """

    def __init__(
        self,
        token: Optional[str] = None,
        max_concurrent_requests: int = 4,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        base_url: str = BASE_URL,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
        clock: Callable[[], float] = time.time,
    ):
        self.token = SecretStr(token or "")
        self.remaining_budget: Optional[int] = None
        self.reset_at: float = 0.0
        self.max_concurrent_requests = max_concurrent_requests
        self._sleep = sleep
        self._clock = clock
        self._lock = asyncio.Lock()
        self._slots = asyncio.Semaphore(max_concurrent_requests)

        headers = {
            "Accept": "application/vnd.github+json",
            "X-GitHub-Api-Version": "2022-11-28",
        }
        if token:
            register_secret(token)
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.AsyncClient(
            base_url=base_url, headers=headers, timeout=30.0, transport=transport
        )

    async def close(self) -> None:
        await self._client.aclose()

    async def __aenter__(self) -> "ApiSession":
        return self

    async def __aexit__(self, *args: object) -> None:
        await self.close()

    async def _reserve(self) -> None:
        async with self._lock:
            if self.remaining_budget is not None and self.remaining_budget <= 0:
                if self._clock() < self.reset_at:
                    raise RateLimited(
                        f"Request budget exhausted until {self.reset_at:.0f}", reset_at=self.reset_at
                    )
                self.remaining_budget = None
            if self.remaining_budget is not None:
                self.remaining_budget -= 1

    async def _account(self, response: httpx.Response) -> None:
        remaining = response.headers.get("X-RateLimit-Remaining")
        reset = response.headers.get("X-RateLimit-Reset")
        async with self._lock:
            if remaining is not None:
                self.remaining_budget = int(remaining)
                if self.remaining_budget < 10:
                    logger.warning(f"GitHub rate limit low: {self.remaining_budget} remaining")
            if reset is not None:
                self.reset_at = float(reset)

    async def wait_for_reset(self) -> None:
        """Sleep until the reset instant reported by the last response."""
        delay = max(self.reset_at - self._clock(), 0.0)
        logger.warning(f"Rate limit exhausted, sleeping {delay:.1f} seconds")
        await self._sleep(delay)
        async with self._lock:
            self.remaining_budget = None

    async def get(self, path: str, params: Optional[Dict[str, Any]] = None) -> httpx.Response:
        """
        Issue one GET with budget checks and retries.

        Raises:
            NotFound, Forbidden, RateLimited, NetworkFailure
        """
        for attempt in range(MAX_ATTEMPTS):
            await self._reserve()
            try:
                async with self._slots:
                    response = await self._client.get(path, params=params)
            except httpx.TransportError as e:
                logger.debug(f"GET {path} attempt {attempt + 1} failed: {e}")
                await self._backoff(attempt)
                continue

            await self._account(response)
            status = response.status_code
            if status in (200, 204, 409):
                return response
            if status == 404:
                raise NotFound(f"{path} not found")
            if status == 429 or (status == 403 and response.headers.get("X-RateLimit-Remaining") == "0"):
                raise RateLimited(f"Rate limited on {path}", reset_at=self.reset_at)
            if status == 403:
                raise Forbidden(f"Access to {path} forbidden")
            if status >= 500:
                logger.debug(f"GET {path} returned {status}, retrying")
                await self._backoff(attempt)
                continue
            raise NetworkFailure(f"Unexpected status {status} for {path}")
        raise NetworkFailure(f"GET {path} failed after {MAX_ATTEMPTS} attempts")

    async def _backoff(self, attempt: int) -> None:
        if attempt + 1 < MAX_ATTEMPTS:
            await self._sleep(2**attempt + random.uniform(0, 1))

    async def paginate(self, path: str, params: Optional[Dict[str, Any]] = None) -> List[Any]:
        """
        Collect every page of a listing endpoint.

        When the first response advertises the last page, the remaining pages are
        fetched concurrently; otherwise ``next`` links are followed. Items keep
        page order. Any failure aborts the whole listing.
        """
        query = dict(params or {})
        query.setdefault("per_page", PER_PAGE)
        first = await self.get(path, query)
        if first.status_code != 200:
            return []
        pages: List[List[Any]] = [first.json()]

        last_url = first.links.get("last", {}).get("url")
        if last_url:
            last_page = int(httpx.URL(last_url).params.get("page", "1"))
            rest = await gather_all(
                *(self.get(path, {**query, "page": page}) for page in range(2, last_page + 1))
            )
            pages.extend(response.json() for response in rest)
        else:
            next_url = first.links.get("next", {}).get("url")
            while next_url:
                response = await self.get(next_url)
                pages.append(response.json())
                next_url = response.links.get("next", {}).get("url")

        return [item for page in pages for item in page]


def _parse_time(value: Optional[str]) -> Optional[datetime]:
    if not value:
        return None
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


async def fetch_comment_counts(session: ApiSession, owner: str, name: str) -> Tuple[int, int]:
    """Count issue comments and pull-request review comments across all pages."""
    issue_comments, pr_comments = await gather_all(
        session.paginate(f"/repos/{owner}/{name}/issues/comments"),
        session.paginate(f"/repos/{owner}/{name}/pulls/comments"),
    )
    return len(issue_comments), len(pr_comments)


async def fetch_repository(
    session: ApiSession,
    owner: str,
    name: str,
    policy: Optional[ResolutionPolicy] = None,
) -> RepositoryRecord:
    """
    Assemble a RepositoryRecord from the repository, listing and comment endpoints.

    Args:
        session: Authenticated session
        owner: Repository owner
        name: Repository name
        policy: Counting rules for merged PRs and resolved issues

    Returns:
        The populated record; exclusion filters are applied downstream

    Raises:
        IncompleteRecord: the payload lacks created_at, or both the latest
            commit and pushed_at
        NotFound, Forbidden, RateLimited, NetworkFailure
    """
    policy = policy or ResolutionPolicy()
    base = f"/repos/{owner}/{name}"
    repo_response = await session.get(base)
    repo = repo_response.json()

    (
        contributors, latest, issues_and_prs, pulls, branches, releases, comments
    ) = await gather_all(
        session.paginate(f"{base}/contributors", {"anon": "1"}),
        session.get(f"{base}/commits", {"per_page": 1}),
        session.paginate(f"{base}/issues", {"state": "all"}),
        session.paginate(f"{base}/pulls", {"state": "all"}),
        session.paginate(f"{base}/branches"),
        session.paginate(f"{base}/releases"),
        fetch_comment_counts(session, owner, name),
    )

    issues = [item for item in issues_and_prs if "pull_request" not in item]
    if policy.issues == "completed":
        resolved = [i for i in issues if i.get("state") == "closed" and i.get("state_reason") == "completed"]
    else:
        resolved = [i for i in issues if i.get("state") == "closed"]
    if policy.pull_requests == "closed":
        accepted = [p for p in pulls if p.get("merged_at") or p.get("state") == "closed"]
    else:
        accepted = [p for p in pulls if p.get("merged_at")]

    last_commit = None
    if latest.status_code == 200 and latest.json():
        last_commit = _parse_time(latest.json()[0]["commit"]["committer"]["date"])
    last_commit = last_commit or _parse_time(repo.get("pushed_at"))

    published = [_parse_time(r.get("published_at")) for r in releases]
    published_times = [t for t in published if t is not None]

    license_info = repo.get("license") or {}
    try:
        record = RepositoryRecord(
            owner=owner,
            name=name,
            created_at=_parse_time(repo["created_at"]),
            last_commit=last_commit,
            is_fork=bool(repo.get("fork", False)),
            license_id=license_info.get("spdx_id") or "",
            commits=sum(int(c.get("contributions", 0)) for c in contributors),
            contributors=len(contributors),
            watchers=int(repo.get("subscribers_count", repo.get("watchers_count", 0))),
            stargazers=int(repo.get("stargazers_count", 0)),
            forks=int(repo.get("forks_count", 0)),
            total_issues=len(issues),
            open_issues=sum(1 for i in issues if i.get("state") == "open"),
            total_pull_requests=len(pulls),
            open_pull_requests=sum(1 for p in pulls if p.get("state") == "open"),
            merged_pull_requests=len(accepted),
            resolved_issues=len(resolved),
            issue_comments=comments[0],
            pr_comments=comments[1],
            branches=len(branches),
            releases=len(releases),
            last_release=max(published_times) if published_times else None,
        )
    except (KeyError, ValidationError) as e:
        raise IncompleteRecord(f"{owner}/{name}: incomplete repository payload ({e})") from e
    logger.info(f"Fetched {record.full_name}: {record.total_issues} issues, {record.total_pull_requests} PRs")
    return record


async def fetch_many(
    session: ApiSession,
    repositories: List[Tuple[str, str]],
    policy: Optional[ResolutionPolicy] = None,
) -> Tuple[List[RepositoryRecord], Dict[str, str]]:
    """
    Fetch several repositories, waiting out rate-limit windows.

    Returns:
        Records in input order and a map of ``owner/name`` to failure reason
    """
    records: List[RepositoryRecord] = []
    failures: Dict[str, str] = {}
    for owner, name in repositories:
        while True:
            try:
                records.append(await fetch_repository(session, owner, name, policy))
                break
            except RateLimited:
                await session.wait_for_reset()
            except (NotFound, Forbidden, NetworkFailure, DataError) as e:
                logger.error(f"Skipping {owner}/{name}: {e}")
                failures[f"{owner}/{name}"] = f"{type(e).__name__}: {e}"
                break
    return records, failures


def _cassette_name(request: httpx.Request) -> str:
    target = request.url.raw_path.decode("ascii")
    return re.sub(r"[^A-Za-z0-9._-]+", "_", target).strip("_") + ".json"


class RecordingTransport(httpx.AsyncBaseTransport):
    """Pass requests through to ``inner`` and store each response as a JSON cassette."""

    def __init__(self, cassette_dir: Path, inner: Optional[httpx.AsyncBaseTransport] = None):
        self.cassette_dir = cassette_dir
        self.cassette_dir.mkdir(parents=True, exist_ok=True)
        self._inner = inner or httpx.AsyncHTTPTransport()

    async def handle_async_request(self, request: httpx.Request) -> httpx.Response:
        response = await self._inner.handle_async_request(request)
        body = await response.aread()
        cassette = {
            "status": response.status_code,
            "headers": {
                key: value for key, value in response.headers.items()
                if key.lower() in ("link", "x-ratelimit-remaining", "x-ratelimit-reset", "content-type")
            },
            "body": json.loads(body) if body else None,
        }
        path = self.cassette_dir / _cassette_name(request)
        path.write_text(json.dumps(cassette, indent=2, sort_keys=True), encoding="utf-8")
        # body is already decoded; the original encoding headers no longer apply
        headers = [
            (key, value) for key, value in response.headers.items()
            if key.lower() not in ("content-encoding", "content-length", "transfer-encoding")
        ]
        return httpx.Response(response.status_code, headers=headers, content=body, request=request)

    async def aclose(self) -> None:
        await self._inner.aclose()


class ReplayTransport(httpx.AsyncBaseTransport):
    """Serve responses from cassettes written by RecordingTransport; unknown requests get 404."""

    def __init__(self, cassette_dir: Path):
        self.cassette_dir = cassette_dir

    async def handle_async_request(self, request: httpx.Request) -> httpx.Response:
        path = self.cassette_dir / _cassette_name(request)
        if not path.exists():
            logger.debug(f"No cassette for {request.url}")
            return httpx.Response(404, json={"message": "Not Found"}, request=request)
        cassette = json.loads(path.read_text(encoding="utf-8"))
        content = b"" if cassette["body"] is None else json.dumps(cassette["body"]).encode("utf-8")
        return httpx.Response(
            cassette["status"], headers=cassette["headers"], content=content, request=request
        )
