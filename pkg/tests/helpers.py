"""Shared fixtures, generators, and independent oracles for the test suite.

The oracles deliberately re-derive expected behavior through a different
mechanism than the implementation under test: span enumeration instead of
capped greedy probing, tuple-label feature maps instead of the shared
compressor, analytic expectations instead of sampled rankings, and plain
arithmetic instead of the library's vector helpers.
"""

from __future__ import annotations

import math
import random
from collections import Counter

import numpy as np

from casegraph.kb import Document, Lexicon, TripleStore, build_lexicon, build_triple_store, normalize_surface
from casegraph.linking import Mention, tokenize
from casegraph.network import SemanticNetwork

FIXTURE_LEXICON_ROWS = [
    ("C0027051", "Myocardial Infarction", ["heart attack", "myocardial infarction"], "T047"),
    ("C0004057", "Aspirin", ["acetylsalicylic acid"], "T121"),
    ("C0155626", "Acute myocardial infarction", [], "T047"),
    ("C0020538", "Hypertension", ["high blood pressure", "htn"], "T047"),
]

FIXTURE_LEXICON_TSV = (
    "C0027051\tMyocardial Infarction\theart attack|myocardial infarction\tT047\n"
    "C0004057\tAspirin\tacetylsalicylic acid\tT121\n"
    "C0155626\tAcute myocardial infarction\t\tT047\n"
    "C0020538\tHypertension\thigh blood pressure|htn\tT047\n"
)

FIXTURE_TRIPLES_TSV = "C0004057\tmay_treat\tC0027051\n"


def fixture_lexicon() -> Lexicon:
    return build_lexicon(FIXTURE_LEXICON_ROWS)


# --- synthetic desk-scale corpus -------------------------------------------

_SINGLE = [
    "aspirin",
    "ibuprofen",
    "insulin",
    "fever",
    "cough",
    "sepsis",
    "hypertension",
    "diabetes",
    "pneumonia",
    "asthma",
]
_DOUBLE = [
    "renal failure",
    "heart failure",
    "cardiac arrest",
    "lung cancer",
    "chest pain",
    "blood clot",
    "bone fracture",
    "skin rash",
]
_TRIPLE = ["acute renal failure", "chronic heart failure", "deep vein thrombosis"]
_FILLERS = [
    "patient",
    "presented",
    "with",
    "history",
    "of",
    "treated",
    "using",
    "after",
    "severe",
    "episode",
    "showed",
    "improvement",
    "following",
    "therapy",
    "and",
    "reported",
]


def synth_lexicon_rows() -> list[tuple[str, str, list[str], str]]:
    rows = []
    for i, surface in enumerate(_SINGLE + _DOUBLE + _TRIPLE):
        semtype = "T121" if surface in ("aspirin", "ibuprofen", "insulin") else "T047"
        rows.append((f"C{1000 + i:07d}", surface.title(), [surface], semtype))
    return rows


def synth_lexicon() -> Lexicon:
    return build_lexicon(synth_lexicon_rows())


def write_lexicon_tsv(rows, path) -> None:
    lines = [f"{cui}\t{name}\t{'|'.join(synonyms)}\t{semtype}\n" for cui, name, synonyms, semtype in rows]
    path.write_text("".join(lines), encoding="utf-8")


def write_triples_tsv(store: TripleStore, path) -> None:
    triples = sorted(store.triples, key=lambda t: (t.head, t.relation, t.tail))
    path.write_text("".join(f"{t.head}\t{t.relation}\t{t.tail}\n" for t in triples), encoding="utf-8")


def write_corpus_jsonl(docs: list[Document], path) -> None:
    import json

    lines = [json.dumps({"id": d.id, "title": d.title, "text": d.text}) + "\n" for d in docs]
    path.write_text("".join(lines), encoding="utf-8")


def write_pipeline_fixtures(tmp_path, num_docs: int = 12, seed: int = 3) -> dict:
    """Materialize a full set of pipeline input files; returns their paths."""
    rows = synth_lexicon_rows()
    lexicon = build_lexicon(rows)
    kb = synth_kb(lexicon)
    corpus = synth_corpus(lexicon, num_docs, seed)
    paths = {
        "lexicon": tmp_path / "lexicon.tsv",
        "triples": tmp_path / "triples.tsv",
        "corpus": tmp_path / "corpus.jsonl",
    }
    write_lexicon_tsv(rows, paths["lexicon"])
    write_triples_tsv(kb, paths["triples"])
    write_corpus_jsonl(corpus, paths["corpus"])
    return {name: str(path) for name, path in paths.items()} | {"docs": corpus}


def synth_kb(lexicon: Lexicon) -> TripleStore:
    cuis = sorted(lexicon.concepts)
    triples = []
    drugs = [c for c in cuis if lexicon.concepts[c].semantic_type == "T121"]
    conditions = [c for c in cuis if lexicon.concepts[c].semantic_type == "T047"]
    for i, condition in enumerate(conditions):
        triples.append((drugs[i % len(drugs)], "may_treat", condition))
        triples.append((condition, "associated_with", conditions[(i + 1) % len(conditions)]))
        if i % 3 == 0:
            triples.append((condition, "cause_of", conditions[(i + 5) % len(conditions)]))
    return build_triple_store(triples)


def synth_corpus(lexicon: Lexicon, num_docs: int, seed: int) -> list[Document]:
    """Short abstracts built from lexicon surfaces and filler words.

    Every document opens with a guaranteed lexicon surface so each network
    has at least one node.
    """
    rng = random.Random(seed)
    surfaces = sorted(lexicon.surface_index)
    docs = []
    for d in range(num_docs):
        sentences = []
        for s in range(rng.randint(2, 4)):
            words = [surfaces[d % len(surfaces)]] if s == 0 else []
            for _ in range(rng.randint(4, 9)):
                if rng.random() < 0.45:
                    words.append(rng.choice(surfaces))
                else:
                    words.append(rng.choice(_FILLERS))
            sentence = " ".join(words)
            sentences.append(sentence[0].upper() + sentence[1:] + ".")
        docs.append(Document(f"doc{d:03d}", f"Case report {d}", " ".join(sentences)))
    return docs


def random_fixture_text(lexicon: Lexicon, rng: random.Random, num_words: int = 25) -> str:
    """Mixed-case text interleaving lexicon surfaces, fillers, and punctuation."""
    surfaces = sorted(lexicon.surface_index)
    pieces = []
    for _ in range(num_words):
        roll = rng.random()
        if roll < 0.5:
            word = rng.choice(surfaces)
        else:
            word = rng.choice(_FILLERS)
        if rng.random() < 0.3:
            word = word.upper() if rng.random() < 0.5 else word.title()
        pieces.append(word)
        if rng.random() < 0.2:
            pieces.append(rng.choice([",", ".", ";", "!", "?", " -"]))
    return " ".join(pieces)


# --- linker oracle -----------------------------------------------------------


def oracle_link(text: str, lexicon: Lexicon) -> list[Mention]:
    """Exhaustively enumerate all indexed token spans, then select the
    leftmost-longest non-overlapping ones."""
    tokens = tokenize(text)
    norm = [normalize_surface(t.text) for t in tokens]
    n = len(tokens)
    by_start: dict[int, list[tuple[int, list[str]]]] = {}
    for i in range(n):
        for j in range(i + 1, n + 1):
            cuis = lexicon.surface_index.get(" ".join(norm[i:j]))
            if cuis:
                by_start.setdefault(i, []).append((j - i, cuis))
    text_bytes = text.encode("utf-8")
    chosen = []
    i = 0
    while i < n:
        if i in by_start:
            width, cuis = max(by_start[i], key=lambda item: item[0])
            start, end = tokens[i].start, tokens[i + width - 1].end
            surface = text_bytes[start:end].decode("utf-8")
            chosen.append(Mention(start, end, surface, tuple(cuis), cuis[0], 1.0))
            i += width
        else:
            i += 1
    return chosen


# --- subtree-pattern feature-map oracle ---------------------------------------


def oracle_wl_counts(net: SemanticNetwork, h: int) -> Counter:
    """Tuple-label feature map: no compressor, order-free by construction."""
    adjacency = {cui: [] for cui in net.nodes}
    for edge in net.edges:
        adjacency[edge.head].append((edge.relation, edge.tail))
        adjacency[edge.tail].append((edge.relation, edge.head))
    labels = {cui: ("n", cui) for cui in net.nodes}
    counts: Counter = Counter(labels.values())
    for _ in range(h):
        refined = {}
        for cui in net.nodes:
            neighborhood = tuple(sorted((rel, labels[other]) for rel, other in adjacency[cui]))
            refined[cui] = (labels[cui], neighborhood)
        labels = refined
        counts.update(labels.values())
    return counts


def oracle_wl_dot(counts_a: Counter, counts_b: Counter) -> int:
    return sum(count * counts_b.get(label, 0) for label, count in counts_a.items())


def oracle_kernel(net_a: SemanticNetwork, net_b: SemanticNetwork, h: int) -> float:
    ca, cb = oracle_wl_counts(net_a, h), oracle_wl_counts(net_b, h)
    if not ca or not cb:
        return 0.0
    return oracle_wl_dot(ca, cb) / math.sqrt(oracle_wl_dot(ca, ca) * oracle_wl_dot(cb, cb))


# --- latent similarity oracle --------------------------------------------------


def oracle_embedding(net: SemanticNetwork, entity_vectors: dict) -> list[float]:
    total = None
    mass = 0
    for cui in sorted(net.nodes):
        if cui not in entity_vectors:
            continue
        weight = net.nodes[cui].weight
        vec = entity_vectors[cui]
        scaled = [weight * float(x) for x in vec]
        total = scaled if total is None else [a + b for a, b in zip(total, scaled)]
        mass += weight
    if total is None:
        return []
    return [x / mass for x in total]


def oracle_cosine(a: list[float], b: list[float]) -> float:
    if not a or not b:
        return 0.0
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)


def oracle_combined(net_a: SemanticNetwork, net_b: SemanticNetwork, lam: float, h: int, model) -> float:
    explicit = oracle_kernel(net_a, net_b, h)
    if model is None:
        latent = 0.0
    else:
        ea = oracle_embedding(net_a, model.entity_vectors)
        eb = oracle_embedding(net_b, model.entity_vectors)
        latent = max(0.0, oracle_cosine(ea, eb))
    return lam * explicit + (1.0 - lam) * latent


# --- enrichment oracle ----------------------------------------------------------


def oracle_enrichment(net: SemanticNetwork, model, tau_lp: float, m_cap: int):
    """Brute-force (pair, relation) enumeration with hand-rolled distances."""
    existing = {(e.head, e.tail, e.relation) for e in net.edges}
    candidates = []
    for head in sorted(net.nodes):
        for tail in sorted(net.nodes):
            if head == tail:
                continue
            if head not in model.entity_vectors or tail not in model.entity_vectors:
                continue
            for relation in sorted(model.relation_vectors):
                key = (head, tail, relation)
                if key in existing:
                    continue
                diff = [
                    float(h) + float(r) - float(t)
                    for h, r, t in zip(
                        model.entity_vectors[head],
                        model.relation_vectors[relation],
                        model.entity_vectors[tail],
                    )
                ]
                if model.config.distance == "l1":
                    dist = sum(abs(x) for x in diff)
                else:
                    dist = math.sqrt(sum(x * x for x in diff))
                score = math.exp(-dist)
                if score >= tau_lp:
                    candidates.append((score, key))
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[:m_cap]


# --- numeric helpers --------------------------------------------------------------


def central_difference(fn, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of fn at point (flattened)."""
    grad = np.zeros_like(point, dtype=float)
    flat = point.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = fn(point)
        flat[i] = original - step
        lower = fn(point)
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denominator = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denominator


# --- toy knowledge bases ------------------------------------------------------------


def planted_toy_kb(
    num_entities: int = 10,
    num_relations: int = 3,
    num_triples: int = 30,
    dim: int = 8,
    seed: int = 5,
) -> TripleStore:
    """A KB realizable by a translational model: sample ground-truth vectors,
    keep the best-translating (head, relation, tail) combinations."""
    rng = np.random.default_rng(seed)
    entities = [f"C9{i:06d}" for i in range(num_entities)]
    relations = [f"rel_{chr(ord('a') + i)}" for i in range(num_relations)]
    entity_vectors = {}
    for entity in entities:
        vec = rng.normal(size=dim)
        entity_vectors[entity] = vec / np.linalg.norm(vec)
    relation_vectors = {relation: 0.5 * rng.normal(size=dim) for relation in relations}
    scored = []
    for head in entities:
        for tail in entities:
            if head == tail:
                continue
            for relation in relations:
                dist = np.abs(entity_vectors[head] + relation_vectors[relation] - entity_vectors[tail]).sum()
                scored.append((float(dist), head, relation, tail))
    scored.sort()
    return build_triple_store([(h, r, t) for _, h, r, t in scored[:num_triples]])


def analytic_random_mean_rank(test, kb: TripleStore, entities: list[str]) -> float:
    """Expected filtered rank of the true entity under random distinct scores."""
    expectations = []
    for triple in test:
        other_tails = sum(
            1
            for e in entities
            if e != triple.tail and kb.has_triple(triple.head, triple.relation, e)
        )
        expectations.append((len(entities) - other_tails + 1) / 2)
        other_heads = sum(
            1
            for e in entities
            if e != triple.head and kb.has_triple(e, triple.relation, triple.tail)
        )
        expectations.append((len(entities) - other_heads + 1) / 2)
    return sum(expectations) / len(expectations)
