"""
Configuration module - loads environment variables and pinned model settings.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# Environment
CACHE_DIR = os.getenv("PARTIAL_EL_CACHE_DIR") or None
LOG_FILE = os.getenv("PARTIAL_EL_LOG_FILE", "partial_el.log")
LOG_LEVEL = os.getenv("PARTIAL_EL_LOG_LEVEL", "INFO")

# Trigram embeddings
EMBED_DIM = 2 ** 18
NGRAM_ORDER = 3
BOUNDARY = "#"
HASH_NAME = "xxh64"
HASH_SEED = 0
INDEX_CACHE_VERSION = 1

# NED-NER reader
SPAN_TEMPERATURE = 0.05

# Generative paradigm
# add-k mass k*|V| must stay small next to per-context counts or every bigram looks alike
LM_SMOOTHING_K = float(os.getenv("PARTIAL_EL_LM_K", "0.01"))
MENTION_BEGIN = "[MB]"
MENTION_END = "[ME]"
ENTITY_BEGIN = "[EB]"
ENTITY_END = "[EE]"
MARKERS = (MENTION_BEGIN, MENTION_END, ENTITY_BEGIN, ENTITY_END)
START_TOKEN = "[S]"
UNK_TOKEN = "[UNK]"

# Paradigm parameters
PARADIGM_DEFAULTS = {
    "K": 100,
    "beam": 6,
    "max_span_tokens": 8,
    "theta": None,
    "canonical_only": False,
}

# Evaluation
RECALL_AT_K = 100
