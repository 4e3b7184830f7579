"""Corpus indexing, query search, and the document-document collection graph.

The index bundles everything needed to answer queries with the exact
pipeline the documents went through: the lexicon, the triple store, any
trained models, the shared label compressor, and the per-document
networks, kernel features, and embeddings. It persists as a single
versioned JSON container whose bytes are reproducible for a fixed corpus,
configuration, and seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError, FormatError, UsageError, ValidationError
from .kb import (
    Document,
    Lexicon,
    TripleStore,
    lexicon_from_dict,
    lexicon_to_dict,
    triples_from_dict,
    triples_to_dict,
)
from .linking import link, split_sentences, tokenize
from .network import (
    SemanticNetwork,
    build_network,
    enrich_network,
    fuse_network,
    network_from_dict,
    network_to_dict,
)
from .relations import (
    ExtractorModel,
    extract_relations,
    extractor_from_dict,
    extractor_to_dict,
    generate_candidates,
    kb_match_extract,
)
from .similarity import (
    DocEmbedding,
    LabelCompressor,
    WlFeatureVector,
    cosine,
    doc_embedding,
    wl_features,
    wl_kernel_normalized,
)
from .transe import EmbeddingModel, model_from_dict, model_to_dict

log = logging.getLogger(__name__)

INDEX_FORMAT = "casegraph-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class SearchResult:
    doc_id: str
    score: float
    rank: int


@dataclass
class CollectionGraph:
    edges: list[tuple[str, str, float]]  # (doc_a, doc_b, similarity), doc_a < doc_b


@dataclass
class Index:
    version: int
    h: int
    config: PipelineConfig
    lexicon: Lexicon
    kb: TripleStore | None
    extractor: ExtractorModel | None
    transe: EmbeddingModel | None
    compressor: LabelCompressor
    networks: dict[str, SemanticNetwork] = field(default_factory=dict)
    wl_vectors: dict[str, WlFeatureVector] = field(default_factory=dict)
    embeddings: dict[str, DocEmbedding] = field(default_factory=dict)
    cui_postings: dict[str, list[str]] = field(default_factory=dict)


def document_network(
    doc: Document,
    lexicon: Lexicon,
    config: PipelineConfig,
    kb: TripleStore | None = None,
    extractor: ExtractorModel | None = None,
    transe: EmbeddingModel | None = None,
) -> SemanticNetwork:
    """Run the full per-document pipeline: link, extract, build, enrich, fuse."""
    content = doc.content()
    tokens = tokenize(content)
    sentences = split_sentences(content, tokens)
    mentions = link(content, lexicon, tokens=tokens)
    pairs = generate_candidates(doc.id, mentions, sentences, tokens, config.window)
    if config.mode == "model":
        if extractor is None:
            raise ConfigError("mode 'model' requires a trained relation extractor")
        edges = extract_relations(pairs, extractor, config.theta_rel, tokens, lexicon)
    else:
        if kb is None:
            raise ConfigError("mode 'kbmatch' requires a triple store")
        edges = kb_match_extract(pairs, kb)
    net = build_network(doc.id, mentions, edges, lexicon)
    if config.enrich:
        if transe is None:
            raise ConfigError("enrichment requires an embedding model")
        m_cap = config.m_cap if config.m_cap is not None else len(net.edges)
        net = enrich_network(net, transe, config.tau_lp, m_cap)
    if config.fuse:
        if transe is None:
            raise ConfigError("confidence fusion requires an embedding model")
        net = fuse_network(net, transe)
    return net


def index_corpus(
    corpus: list[Document],
    lexicon: Lexicon,
    config: PipelineConfig,
    kb: TripleStore | None = None,
    extractor: ExtractorModel | None = None,
    transe: EmbeddingModel | None = None,
) -> Index:
    """Build networks for every document and featurize them with a shared compressor."""
    seen: set[str] = set()
    for doc in corpus:
        if doc.id in seen:
            raise ValidationError(f"duplicate document id {doc.id}")
        seen.add(doc.id)
    compressor = LabelCompressor()
    index = Index(INDEX_VERSION, config.h, config, lexicon, kb, extractor, transe, compressor)
    for doc in corpus:
        net = document_network(doc, lexicon, config, kb, extractor, transe)
        index.networks[doc.id] = net
        index.wl_vectors[doc.id] = wl_features(net, config.h, compressor)
        if transe is not None:
            index.embeddings[doc.id] = doc_embedding(net, transe)
        else:
            index.embeddings[doc.id] = DocEmbedding(np.zeros(0), 0)
    postings: dict[str, list[str]] = {}
    for doc_id in sorted(index.networks):
        for cui in index.networks[doc_id].nodes:
            postings.setdefault(cui, []).append(doc_id)
    index.cui_postings = postings
    log.info("indexed %d documents (%d distinct concepts)", len(corpus), len(postings))
    return index


def _score_against(
    index: Index,
    query_vector: WlFeatureVector,
    query_embedding: DocEmbedding,
    doc_id: str,
    lam: float,
) -> float:
    explicit = wl_kernel_normalized(query_vector, index.wl_vectors[doc_id])
    latent = max(0.0, cosine(query_embedding.vector, index.embeddings[doc_id].vector))
    return lam * explicit + (1.0 - lam) * latent


def search(
    index: Index,
    query_text: str,
    k: int,
    lam: float | None = None,
    prune: bool = False,
) -> list[SearchResult]:
    """Rank documents against a query case processed by the document pipeline.

    With ``prune`` only documents sharing at least one concept with the
    query are scored. Ties break by ascending doc id; fewer than ``k``
    results are returned when candidates run out.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if lam is None:
        lam = index.config.lambda_weight
    if not 0.0 <= lam <= 1.0:
        raise UsageError(f"lambda must be within [0, 1], got {lam}")
    query_doc = Document("query", "", query_text)
    net = document_network(query_doc, index.lexicon, index.config, index.kb, index.extractor, index.transe)
    overlay = index.compressor.overlay()
    query_vector = wl_features(net, index.h, overlay)
    if index.transe is not None:
        query_embedding = doc_embedding(net, index.transe)
    else:
        query_embedding = DocEmbedding(np.zeros(0), 0)
    if prune:
        candidates = sorted({doc for cui in net.nodes for doc in index.cui_postings.get(cui, ())})
    else:
        candidates = sorted(index.networks)
    scored = [(doc_id, _score_against(index, query_vector, query_embedding, doc_id, lam)) for doc_id in candidates]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [SearchResult(doc_id, score, rank) for rank, (doc_id, score) in enumerate(scored[:k], start=1)]


def build_collection_graph(index: Index, lam: float | None = None, tau_doc: float | None = None) -> CollectionGraph:
    """Score all unordered document pairs and keep those at or above tau_doc."""
    if lam is None:
        lam = index.config.lambda_weight
    if tau_doc is None:
        tau_doc = index.config.tau_doc
    if not 0.0 <= tau_doc <= 1.0:
        raise UsageError(f"tau_doc must be within [0, 1], got {tau_doc}")
    doc_ids = sorted(index.networks)
    edges = []
    for i, doc_a in enumerate(doc_ids):
        for doc_b in doc_ids[i + 1 :]:
            explicit = wl_kernel_normalized(index.wl_vectors[doc_a], index.wl_vectors[doc_b])
            latent = max(0.0, cosine(index.embeddings[doc_a].vector, index.embeddings[doc_b].vector))
            score = lam * explicit + (1.0 - lam) * latent
            if score >= tau_doc:
                edges.append((doc_a, doc_b, score))
    return CollectionGraph(edges)


def collection_graph_to_dot(graph: CollectionGraph) -> str:
    """Undirected DOT rendering with the similarity as a 3-decimal edge label."""
    lines = ["graph collection {"]
    for doc_a, doc_b, score in graph.edges:
        a = doc_a.replace('"', '\\"')
        b = doc_b.replace('"', '\\"')
        lines.append(f'  "{a}" -- "{b}" [label={score:.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_PATH_FIELDS = ("lexicon", "triples", "corpus", "extractor_model", "transe_model", "index")


def index_to_dict(index: Index) -> dict:
    # Input paths are dropped: the artifacts they pointed at are embedded, and
    # keeping them would make index bytes depend on where the inputs lived.
    config = index.config.to_dict()
    for field_name in _PATH_FIELDS:
        config[field_name] = None
    return {
        "format": INDEX_FORMAT,
        "version": index.version,
        "h": index.h,
        "config": config,
        "lexicon": lexicon_to_dict(index.lexicon),
        "kb": triples_to_dict(index.kb) if index.kb is not None else None,
        "extractor": extractor_to_dict(index.extractor) if index.extractor is not None else None,
        "transe": model_to_dict(index.transe) if index.transe is not None else None,
        "compressor": {"table": index.compressor.table, "next_id": index.compressor.next_id},
        "networks": {doc_id: network_to_dict(net) for doc_id, net in index.networks.items()},
        "wl": {
            doc_id: {str(label): count for label, count in vec.counts.items()}
            for doc_id, vec in index.wl_vectors.items()
        },
        "embeddings": {
            doc_id: {"vector": emb.vector.tolist(), "mass": emb.mass}
            for doc_id, emb in index.embeddings.items()
        },
        "postings": index.cui_postings,
    }


def index_from_dict(data: dict) -> Index:
    if data.get("format") != INDEX_FORMAT:
        raise FormatError(f"not a {INDEX_FORMAT} container")
    if data.get("version") != INDEX_VERSION:
        raise FormatError(f"unsupported index version {data.get('version')} (expected {INDEX_VERSION})")
    config = PipelineConfig(**data["config"])
    compressor = LabelCompressor()
    compressor.table = dict(data["compressor"]["table"])
    compressor.next_id = data["compressor"]["next_id"]
    index = Index(
        data["version"],
        data["h"],
        config,
        lexicon_from_dict(data["lexicon"]),
        triples_from_dict(data["kb"]) if data["kb"] is not None else None,
        extractor_from_dict(data["extractor"]) if data["extractor"] is not None else None,
        model_from_dict(data["transe"]) if data["transe"] is not None else None,
        compressor,
    )
    index.networks = {doc_id: network_from_dict(net) for doc_id, net in data["networks"].items()}
    index.wl_vectors = {
        doc_id: WlFeatureVector({int(label): count for label, count in counts.items()}, data["h"], compressor)
        for doc_id, counts in data["wl"].items()
    }
    index.embeddings = {
        doc_id: DocEmbedding(np.array(emb["vector"], dtype=float), emb["mass"])
        for doc_id, emb in data["embeddings"].items()
    }
    index.cui_postings = {cui: list(docs) for cui, docs in data["postings"].items()}
    return index


def save_index(index: Index, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(index_to_dict(index), sort_keys=True, separators=(",", ":")) + "\n")


def load_index(path: str | Path) -> Index:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a JSON index container ({exc.msg})") from None
    try:
        return index_from_dict(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed index container ({exc})") from None
