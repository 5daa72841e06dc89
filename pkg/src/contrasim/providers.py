"""Generation and discriminator providers.

The augmentation pipeline talks to two external services: a chat-completion
style generator that rewrites headlines, and a discriminator that scores the
semantic similarity of a (base, candidate) pair in [0, 1]. Both have
deterministic in-process mocks so the whole pipeline runs offline.
"""

from __future__ import annotations

import hashlib
import time


class ProviderError(RuntimeError):
    """Transport failure, bad payload, or empty generation from a provider."""


#: System prompts issued per augmentation action.
PROMPT_TEMPLATES = {
    "Re": (
        "Please reword this headline for me, preserving the exact semantic "
        "meaning perfectly. Your returned headline should contain the exact "
        "information with no meaning added or subtracted, but just rephrased. "
        "Please generate the headline, and return only that with no other "
        "text. Thanks."
    ),
    "S": (
        "Please modify this headline slightly, so it is about something "
        "related but different. If the headline is good news, ensure it "
        "remains good news, and if it is bad news, ensure it remains bad "
        "news. Please generate the headline, and return only that with no "
        "other text. Thanks."
    ),
    "N": (
        "Please reword this headline for me such that the information is the "
        "same except that it now is about the opposite meaning. Please "
        "generate the headline, and return only that with no other text. "
        "Thanks."
    ),
}


def _hash_fraction(*parts: str) -> float:
    """Deterministic pseudo-uniform in [0, 1) from string parts."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") / 2**64


class MockGenerator:
    """Offline generator: tags the base text with the action so the mock
    discriminator can score it into the right band. The attempt index is mixed
    in so retries produce distinct candidates."""

    PREFIXES = {"Re": "Rephrased", "S": "Related", "N": "Contrary"}

    def __init__(self, seed: int = 0):
        self.seed = seed

    def generate(self, action: str, text: str, attempt: int = 0, temperature: float = 0.7) -> str:
        if action not in self.PREFIXES:
            raise ValueError(f"unknown generation action {action!r}")
        prefix = self.PREFIXES[action]
        if attempt == 0:
            return f"{prefix}: {text}"
        return f"{prefix} (take {attempt + 1}): {text}"


class MockDiscriminator:
    """Offline similarity scorer.

    Candidates carrying a known mock-generator tag score inside the band that
    action is supposed to occupy (jittered around its middle, hash of the pair
    deciding where). Untagged pairs get a plain hash score in [0, 1].
    """

    BANDS = {"Rephrased": (0.66, 1.0), "Related": (0.33, 0.66), "Contrary": (0.0, 0.33)}

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, text_a: str, text_b: str) -> float:
        u = _hash_fraction(str(self.seed), text_a, text_b)
        for prefix, (lo, hi) in self.BANDS.items():
            if text_b.startswith(prefix):
                width = hi - lo
                # stay in the middle 80% of the band so boundary policy never matters
                return lo + width * (0.1 + 0.8 * u)
        return u


class HttpGenerator:
    """Chat-completion client: POST {model, messages, temperature}; the first
    returned message's content is the candidate headline."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 temperature: float = 0.7, max_retries: int = 3,
                 backoff: float = 0.5, timeout: float = 60.0,
                 prompts: dict | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.prompts = dict(PROMPT_TEMPLATES)
        if prompts:
            unknown = set(prompts) - set(PROMPT_TEMPLATES)
            if unknown:
                raise ValueError(f"prompt overrides for unknown actions {sorted(unknown)}")
            self.prompts.update({k: v for k, v in prompts.items() if v})

    def generate(self, action: str, text: str, attempt: int = 0, temperature: float | None = None) -> str:
        import requests

        if action not in self.prompts:
            raise ValueError(f"unknown generation action {action!r}")
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": self.prompts[action]},
                {"role": "user", "content": text},
            ],
            "temperature": self.temperature if temperature is None else temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc = None
        for i in range(self.max_retries):
            try:
                resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
                break
            except Exception as exc:
                last_exc = exc
                if i + 1 < self.max_retries:
                    time.sleep(self.backoff * (2**i))
        else:
            raise ProviderError(f"generation endpoint failed after {self.max_retries} attempts: {last_exc}")
        candidate = str(content).strip()
        if not candidate:
            raise ProviderError("generation endpoint returned empty text")
        return candidate


class HttpDiscriminator:
    """Similarity scorer client: POST {text_a, text_b} -> {score in [0, 1]}."""

    def __init__(self, endpoint: str, api_key: str | None = None,
                 max_retries: int = 3, backoff: float = 0.5, timeout: float = 30.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout

    def score(self, text_a: str, text_b: str) -> float:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc = None
        for i in range(self.max_retries):
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"text_a": text_a, "text_b": text_b},
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                value = float(resp.json()["score"])
                break
            except Exception as exc:
                last_exc = exc
                if i + 1 < self.max_retries:
                    time.sleep(self.backoff * (2**i))
        else:
            raise ProviderError(f"discriminator endpoint failed after {self.max_retries} attempts: {last_exc}")
        if not 0.0 <= value <= 1.0:
            raise ProviderError(f"discriminator score {value} outside [0, 1]")
        return value
