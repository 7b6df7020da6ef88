"""Fetch samples with per-token log-probabilities from a completions endpoint.

Speaks the de-facto open inference wire format: POST /v1/completions with
{model, prompt, temperature, max_tokens, n, logprobs}.  Served logprobs are
converted to base-temperature logits (logit = T * logprob), so one stored
record supports both trajectory-mode and counterfactual-mode scoring.
"""
from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx

from .errors import FetchFailed, InvalidArgument
from .records import RecordSet, SampleRecord, StepDist, extract_answer

API_KEY_ENV = "TURNPOINT_API_KEY"
ENDPOINT_ENV = "TURNPOINT_ENDPOINT"


@dataclass
class SamplingParams:
    """Request-side sampling knobs; top_k/top_p pass through to the server."""

    temperatures: list[float] = field(default_factory=lambda: [0.5])
    n_per_temperature: int = 1
    max_tokens: int = 1024
    top_k: int | None = None
    top_p: float | None = None
    logprob_depth: int = 5

    def __post_init__(self):
        if self.max_tokens < 1:
            raise InvalidArgument("max_tokens must be >= 1")
        if self.n_per_temperature < 0:
            raise InvalidArgument("n_per_temperature must be >= 0")
        for t in self.temperatures:
            if t <= 0:
                raise InvalidArgument(f"temperatures must be positive, got {t}")


@dataclass
class EndpointConfig:
    base_url: str
    model: str = "default"
    api_key_env: str = API_KEY_ENV
    timeout: float = 120.0
    max_in_flight: int = 4
    max_tries: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    server_reports_base_logprobs: bool = False

    @property
    def completions_url(self) -> str:
        base = self.base_url.rstrip("/")
        if base.endswith("/v1/completions"):
            return base
        return base + "/v1/completions"


def _convert_steps(choice: dict, temperature: float, base_logprobs: bool) -> list[StepDist]:
    """Served per-token logprobs to base-temperature logit steps.

    Alternatives are ordered by descending logprob (token as tiebreak) so the
    output is canonical regardless of server dict ordering.
    """
    lp = choice.get("logprobs") or {}
    tokens = lp.get("tokens") or []
    top = lp.get("top_logprobs") or []
    steps: list[StepDist] = []
    scale = 1.0 if base_logprobs else temperature
    for i, chosen in enumerate(tokens):
        alts = top[i] if i < len(top) and top[i] else None
        if not alts:
            token_lps = lp.get("token_logprobs") or []
            if i < len(token_lps) and token_lps[i] is not None:
                alts = {chosen: token_lps[i]}
            else:
                continue
        entries = sorted(alts.items(), key=lambda kv: (-kv[1], kv[0]))
        topk = [(tok, scale * float(logprob)) for tok, logprob in entries]
        if any(not math.isfinite(l) for _, l in topk):
            continue
        steps.append(StepDist(chosen=chosen, topk=topk))
    return steps


def _post_with_retries(
    client: httpx.Client, endpoint: EndpointConfig, payload: dict
) -> dict:
    delay = endpoint.backoff_base
    last_error: Exception | None = None
    for attempt in range(endpoint.max_tries):
        try:
            resp = client.post(endpoint.completions_url, json=payload)
            if resp.status_code >= 500 or resp.status_code == 429:
                raise httpx.HTTPStatusError(
                    f"server returned {resp.status_code}", request=resp.request, response=resp
                )
            resp.raise_for_status()
            return resp.json()
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            last_error = exc
            if isinstance(exc, httpx.HTTPStatusError):
                code = exc.response.status_code
                if code < 500 and code != 429:
                    raise FetchFailed(f"request rejected: {exc}") from exc
            if attempt < endpoint.max_tries - 1:
                time.sleep(delay)
                delay *= endpoint.backoff_factor
    raise FetchFailed(f"all {endpoint.max_tries} attempts failed: {last_error}") from last_error


def fetch_samples(
    endpoint: EndpointConfig,
    prompts: list[str] | list[tuple[str, str]],
    params: SamplingParams,
    transport: httpx.BaseTransport | None = None,
    answer_extractor=extract_answer,
) -> RecordSet:
    """Request n completions per (prompt, temperature) and convert to records.

    Prompts may be plain strings (ids are assigned positionally) or (id, text)
    pairs.  Requests run on a bounded worker pool; record order is fixed by
    (problem_id, temperature, sample_index) at assembly so a deterministic
    server yields deterministic files.
    """
    named: list[tuple[str, str]] = []
    for i, p in enumerate(prompts):
        if isinstance(p, tuple):
            named.append(p)
        else:
            named.append((f"prompt-{i:04d}", p))

    if params.n_per_temperature == 0 or not named:
        return RecordSet([])

    headers = {}
    api_key = os.environ.get(endpoint.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    tasks = [(pid, text, t) for pid, text in named for t in params.temperatures]

    def fetch_one(task: tuple[str, str, float]) -> list[SampleRecord]:
        pid, text, t = task
        payload = {
            "model": endpoint.model,
            "prompt": text,
            "temperature": t,
            "max_tokens": params.max_tokens,
            "n": params.n_per_temperature,
            "logprobs": params.logprob_depth,
        }
        if params.top_p is not None:
            payload["top_p"] = params.top_p
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        with httpx.Client(timeout=endpoint.timeout, transport=transport, headers=headers) as client:
            body = _post_with_retries(client, endpoint, payload)
        records = []
        choices = body.get("choices", [])
        for idx, choice in enumerate(sorted(choices, key=lambda c: c.get("index", 0))):
            steps = _convert_steps(choice, t, endpoint.server_reports_base_logprobs)
            short = [
                s for s in steps if len(s.topk) < params.logprob_depth
            ]
            if short:
                warnings.warn(
                    f"{pid}@T={t}: {len(short)} steps carry fewer than "
                    f"{params.logprob_depth} alternatives",
                    stacklevel=2,
                )
            meta = {"model": str(body.get("model", endpoint.model))}
            if "id" in body:
                meta["request_id"] = str(body["id"])
            meta["logprob_depth"] = str(params.logprob_depth)
            text_out = choice.get("text", "")
            records.append(
                SampleRecord(
                    problem_id=pid,
                    temperature=t,
                    sample_index=idx,
                    steps=steps,
                    answer=answer_extractor(text_out),
                    meta=meta,
                )
            )
        return records

    all_records: list[SampleRecord] = []
    with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
        for batch in pool.map(fetch_one, tasks):
            all_records.extend(batch)
    all_records.sort(key=lambda r: r.key)
    for rec in all_records:
        rec.validate()
    return RecordSet(all_records)
