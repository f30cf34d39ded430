"""
The decision service over HTTP
==============================

Exercise the gate service endpoints in process. A production deployment runs
the same app under uvicorn via `uar serve --bundle <dir>`; the request and
response bytes here are identical to what the wire carries.
"""

import numpy as np
from fastapi.testclient import TestClient

from uar.classifier import LinearClassifier
from uar.config import ServiceConfig
from uar.features import Scenario
from uar.gate import GateBundle, decide_tree
from uar.service import create_app

rng = np.random.Generator(np.random.PCG64(5))


def head(scenario):
    return LinearClassifier(scenario=scenario, weights=rng.standard_normal((2, 8)),
                            bias=rng.standard_normal(2))


bundle = GateBundle(
    intent_clf=head(Scenario.INTENT),
    knowledge_clf=head(Scenario.KNOWLEDGE),
    time_clf=head(Scenario.TIME),
    self_clf=head(Scenario.SELF),
)
config = ServiceConfig(model_tag="demo-7b")
client = TestClient(create_app(config, bundle=bundle))

print("GET /v1/health")
print(" ", client.get("/v1/health").json())

vector = rng.standard_normal(8)
response = client.post("/v1/decide", json={"vector": vector.tolist()})
print("\nPOST /v1/decide")
print(" ", response.json())

# the service is a thin shell: bytes equal the library call exactly
library = decide_tree(bundle, vector).to_json().encode()
print(f"  byte-identical to library decision: {response.content == library}")

# per-request policy override without restarting anything
override = client.post("/v1/decide", json={"vector": vector.tolist(), "policy": "always"})
print(f"  policy=always override: {override.json()['final']}")

# malformed input maps to structured 400s, never a stack trace
bad_dim = client.post("/v1/decide", json={"vector": [1.0, 2.0]})
print(f"\nwrong dimension -> {bad_dim.status_code} {bad_dim.json()}")
not_numbers = client.post("/v1/decide", json={"vector": ["a", "b"]})
print(f"non-numeric     -> {not_numbers.status_code} {not_numbers.json()['code']}")

# text input needs a configured extractor; without one the service says so
no_extractor = client.post("/v1/decide_text", json={"text": "Who won in 2022?"})
print(f"decide_text without extractor -> {no_extractor.status_code} {no_extractor.json()['code']}")
