"""LLM judge over an OpenAI-compatible chat-completions endpoint.

The judge is asked which of two texts scores higher and answers with a single
label token. The probability that the first text wins is the softmax over the
log-probabilities of the two label tokens at the first generated position.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import httpx
import numpy as np
from scipy.special import logsumexp

from .core import Comparison, ItemSet
from .errors import ConfigurationError, JudgeTransportError, MissingLabelError
from .targets import Link, apply_link

logger = logging.getLogger(__name__)

PROMPTS = {
    "response-time": (
        "Question 1:\n{text1}\n\nQuestion 2:\n{text2}\n\n"
        "Which reading comprehension question can expect a longer candidate response time, "
        "1 or 2? Return only 1 or 2."
    ),
    "difficulty": (
        "Question 1:\n{text1}\n\nQuestion 2:\n{text2}\n\n"
        "Which reading comprehension question is more difficult, 1 or 2? Return only 1 or 2."
    ),
}

MISSING_LABEL_PENALTY = 10.0
_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


def check_template(template: str) -> None:
    for ph in ("{text1}", "{text2}"):
        count = template.count(ph)
        if count != 1:
            raise ConfigurationError(f"prompt template must contain {ph} exactly once (found {count})")


def render_prompt(template: str, text_i: str, text_j: str) -> str:
    """Bind ``text_i`` to ``{text1}`` and ``text_j`` to ``{text2}``.

    Plain substitution: braces inside the texts are left alone.
    """
    check_template(template)
    head, tail = template.split("{text1}")
    if "{text2}" in head:
        a, b = head.split("{text2}")
        return a + text_j + b + text_i + tail
    a, b = tail.split("{text2}")
    return head + text_i + a + text_j + b


def probability_from_logprobs(lp_1: float, lp_2: float) -> float:
    """Softmax probability of label 1 given the two label log-probabilities."""
    if lp_1 == -math.inf and lp_2 == -math.inf:
        raise MissingLabelError("both label log-probabilities are -inf")
    if math.isnan(lp_1) or math.isnan(lp_2):
        raise MissingLabelError("label log-probability is NaN")
    # e^a / (e^a + e^b) == sigmoid(a - b); the sigmoid form makes p(a,b) + p(b,a) == 1 exactly
    if lp_2 == -math.inf:
        return 1.0
    if lp_1 == -math.inf:
        return 0.0
    return float(apply_link(lp_1 - lp_2, Link.SIGMOID))


@dataclass(frozen=True)
class JudgeEndpointConfig:
    base_url: str
    model_name: str
    prompt_template: str = PROMPTS["difficulty"]
    label_tokens: tuple[str, str] = ("1", "2")
    label_variants: Mapping[str, tuple[str, ...]] | None = None
    timeout: float = 30.0
    max_retries: int = 5
    top_logprobs: int = 5
    api_key_env: str = "OPENAI_API_KEY"
    backoff_base: float = 1.0
    backoff_max: float = 30.0

    def __post_init__(self) -> None:
        check_template(self.prompt_template)
        a, b = self.label_tokens
        if a == b:
            raise ConfigurationError("label tokens must differ")
        if self.top_logprobs < 5:
            raise ConfigurationError("top_logprobs must be >= 5")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")

    @property
    def temperature(self) -> float:
        return 0.0

    def variants(self, label: str) -> tuple[str, ...]:
        if self.label_variants and label in self.label_variants:
            return tuple(self.label_variants[label])
        return (label, " " + label)

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": self.top_logprobs,
        }


@dataclass(frozen=True)
class Judgment:
    comparison: Comparison
    lp_1: float
    lp_2: float
    retries: int = 0
    matched: tuple[str, ...] = ()
    imputed: str | None = None
    cached: bool = False


def extract_label_logprobs(response: dict, cfg: JudgeEndpointConfig) -> tuple[float, float, tuple[str, ...], str | None]:
    """Pull both label log-probabilities from the first generated position.

    A label missing from the top-k list gets ``min(top-k) - 10`` and is reported
    as imputed; only when both are missing is this an error.
    """
    try:
        first = response["choices"][0]["logprobs"]["content"][0]
    except (KeyError, IndexError, TypeError):
        raise MissingLabelError("response carries no per-token log-probabilities") from None
    cands: dict[str, float] = {}
    for entry in first.get("top_logprobs") or []:
        cands.setdefault(entry["token"], float(entry["logprob"]))
    if "token" in first and "logprob" in first:
        cands.setdefault(first["token"], float(first["logprob"]))

    found: list[float | None] = []
    matched: list[str] = []
    for label in cfg.label_tokens:
        hits = [tok for tok in cfg.variants(label) if tok in cands]
        matched.extend(hits)
        found.append(float(logsumexp([cands[t] for t in hits])) if hits else None)

    if found[0] is None and found[1] is None:
        raise MissingLabelError(f"neither label {cfg.label_tokens} in top-{len(cands)} tokens")
    imputed = None
    if found[0] is None or found[1] is None:
        fill = min(cands.values()) - MISSING_LABEL_PENALTY
        missing = 0 if found[0] is None else 1
        imputed = cfg.label_tokens[missing]
        found[missing] = fill
    if matched:
        logger.debug("matched label tokens %r", matched)
    return found[0], found[1], tuple(matched), imputed


class JudgeClient:
    """Synchronous client; safe to share between threads (httpx.Client is)."""

    def __init__(self, cfg: JudgeEndpointConfig, http: httpx.Client | None = None):
        self.cfg = cfg
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = http or httpx.Client(timeout=cfg.timeout, headers=headers)
        self._url = cfg.base_url.rstrip("/") + "/chat/completions"

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> JudgeClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, body: dict) -> tuple[dict, int]:
        retries = 0
        while True:
            try:
                resp = self._http.post(self._url, json=body)
                if resp.status_code in _RETRYABLE_STATUS:
                    raise httpx.HTTPStatusError(f"HTTP {resp.status_code}", request=resp.request, response=resp)
                if resp.status_code >= 400:
                    raise JudgeTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                return resp.json(), retries
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                if retries >= self.cfg.max_retries:
                    raise JudgeTransportError(f"giving up after {retries} retries: {exc}") from exc
                delay = min(self.cfg.backoff_max, self.cfg.backoff_base * 2 ** retries)
                logger.info("request failed (%s); retry %d in %.2fs", exc, retries + 1, delay)
                time.sleep(delay)
                retries += 1

    def compare(self, text_i: str, text_j: str, id_i: str = "1", id_j: str = "2") -> Judgment:
        prompt = render_prompt(self.cfg.prompt_template, text_i, text_j)
        data, retries = self._post(self.cfg.request_body(prompt))
        lp_1, lp_2, matched, imputed = extract_label_logprobs(data, self.cfg)
        p = probability_from_logprobs(lp_1, lp_2)
        return Judgment(Comparison(id_i, id_j, p), lp_1, lp_2, retries, matched, imputed)


def compare(cfg: JudgeEndpointConfig, text_i: str, text_j: str, id_i: str = "1", id_j: str = "2") -> Judgment:
    with JudgeClient(cfg) as client:
        return client.compare(text_i, text_j, id_i, id_j)


# -- cache and batch driver ----------------------------------------------------


def cache_key(model: str, prompt: str) -> str:
    return hashlib.sha256(json.dumps([model, prompt], ensure_ascii=False).encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only line-delimited cache; later records win on repeated keys."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # a torn final line from an interrupted write
                        continue
                    self._data[rec["key"]] = rec

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key: str) -> dict | None:
        return self._data.get(key)

    def put(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            self._data[record["key"]] = record
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())


@dataclass
class JudgeRunResult:
    comparisons: list[Comparison]
    failures: list[dict] = field(default_factory=list)
    n_requests: int = 0
    n_cached: int = 0
    n_imputed: int = 0


def judge_pairs(
    items: ItemSet,
    pairs: np.ndarray | Sequence[tuple[int, int]],
    cfg: JudgeEndpointConfig,
    cache_path: str | Path,
    jobs: int = 4,
    client: JudgeClient | None = None,
) -> JudgeRunResult:
    """Judge every pair, reusing cached answers; results follow the order of ``pairs``.

    Every fresh answer is appended to the cache as soon as it arrives, so an
    interrupted run resumes where it stopped. Pairs that still fail after the
    client's retries are returned in ``failures`` instead of raising.
    """
    cache = ResponseCache(cache_path)
    own_client = client is None
    client = client or JudgeClient(cfg)
    pairs = [(int(a), int(b)) for a, b in pairs]
    out: list[Comparison | None] = [None] * len(pairs)
    failures: list[dict] = []
    stats = {"requests": 0, "cached": 0, "imputed": 0}
    stats_lock = threading.Lock()

    def work(pos: int) -> None:
        a, b = pairs[pos]
        it_a, it_b = items[a], items[b]
        prompt = render_prompt(cfg.prompt_template, it_a.text, it_b.text)
        key = cache_key(cfg.model_name, prompt)
        hit = cache.get(key)
        if hit is not None:
            out[pos] = Comparison(it_a.id, it_b.id, hit["p"])
            with stats_lock:
                stats["cached"] += 1
            return
        try:
            j = client.compare(it_a.text, it_b.text, it_a.id, it_b.id)
        except (JudgeTransportError, MissingLabelError) as exc:
            with stats_lock:
                stats["requests"] += 1
                failures.append({"i": it_a.id, "j": it_b.id, "error": str(exc)})
            return
        cache.put({
            "key": key, "model": cfg.model_name, "id_i": it_a.id, "id_j": it_b.id,
            "lp_1": j.lp_1, "lp_2": j.lp_2, "p": j.comparison.p,
            "imputed": j.imputed, "matched": list(j.matched), "retries": j.retries,
        })
        out[pos] = j.comparison
        with stats_lock:
            stats["requests"] += 1
            stats["imputed"] += j.imputed is not None

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for fut in [pool.submit(work, k) for k in range(len(pairs))]:
                    fut.result()
        else:
            for k in range(len(pairs)):
                work(k)
    finally:
        if own_client:
            client.close()

    failures.sort(key=lambda f: (f["i"], f["j"]))
    return JudgeRunResult(
        comparisons=[c for c in out if c is not None],
        failures=failures,
        n_requests=stats["requests"],
        n_cached=stats["cached"],
        n_imputed=stats["imputed"],
    )


def write_failures(failures: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in failures:
            fh.write(json.dumps(f, ensure_ascii=False) + "\n")
