"""memloom: a long-term conversational memory engine.

Raw multi-session dialogues become narrative memory: sessions are segmented
into topical episodes, episodes are summarized and distilled into per-user
experience traces, traces are clustered into topics and chronologically
ordered narrative threads, and threads are encapsulated into per-user memory
cards. Queries combine episodic vector retrieval with card-guided thread
extraction.
"""

__version__ = "0.1.0"

from .config import EngineConfig, load_config
from .engine import MemoryEngine
from .search import Query, SearchMode

__all__ = ["EngineConfig", "MemoryEngine", "Query", "SearchMode", "load_config", "__version__"]
