from typing import Optional
from collections import OrderedDict
import hashlib
import logging
from .config import settings
from .eq_oracle import SolutionCertificate, shapley_solve
from .game_model import MarkovGame

logger = logging.getLogger(__name__)


class CertificateCache:
    """Caches oracle certificates so repeated runs on one game solve it once."""

    def __init__(self, max_cache_size: Optional[int] = None, enable_cache: Optional[bool] = None):
        """Initialize the cache with LRU eviction policy."""
        self.cache: OrderedDict[str, SolutionCertificate] = OrderedDict()
        self.enable_cache = settings.ENABLE_CACHE if enable_cache is None else enable_cache
        self.max_cache_size = settings.MAX_CACHE_SIZE if max_cache_size is None else max_cache_size
        self.hits = 0
        self.misses = 0

    def _generate_key(self, game: MarkovGame, tol: float) -> str:
        """Generate a cache key from the canonical game JSON and the tolerance."""
        return hashlib.sha256(f"{game.to_json()}|{tol!r}".encode()).hexdigest()

    def get(self, key: str) -> Optional[SolutionCertificate]:
        if not self.enable_cache or key not in self.cache:
            return None
        # Move to end (most recently used)
        self.cache.move_to_end(key)
        return self.cache[key]

    def set(self, key: str, value: SolutionCertificate) -> None:
        if not self.enable_cache:
            return
        if key in self.cache:
            self.cache.move_to_end(key)
        elif len(self.cache) >= self.max_cache_size:
            self.cache.popitem(last=False)
        self.cache[key] = value

    def get_or_solve(self, game: MarkovGame, tol: Optional[float] = None) -> SolutionCertificate:
        """Certificate for `game`, solving with Shapley iteration on a miss."""
        if tol is None:
            tol = settings.ORACLE_TOL
        key = self._generate_key(game, tol)
        certificate = self.get(key)
        if certificate is not None:
            self.hits += 1
            return certificate
        self.misses += 1
        certificate = shapley_solve(game, tol)
        self.set(key, certificate)
        logger.debug(f"Cached certificate {key[:12]} ({len(self.cache)}/{self.max_cache_size})")
        return certificate

    def clear(self) -> None:
        """Clear all cached entries."""
        self.cache.clear()
        self.hits = self.misses = 0


certificate_cache = CertificateCache()
