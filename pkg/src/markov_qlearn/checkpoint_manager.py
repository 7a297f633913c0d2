import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ValidationError

from .config import settings
from .errors import ConfigError
from .learner import AgentSnapshot

logger = logging.getLogger(__name__)


class SimulationCheckpoint(BaseModel):
    """Everything needed to continue a simulation bit-for-bit."""

    run_id: str
    stage: int  # completed stages
    state: int  # state the next stage is played in
    agents: Dict[int, AgentSnapshot]  # keyed by player
    rng_state: str  # JSON of the bit generator state; PCG64 needs 128-bit ints
    rows: List[Dict[str, Union[int, float]]] = []


class CheckpointManager:
    """Saves and loads simulation checkpoints as JSON files."""

    def __init__(self, checkpoint_dir: Optional[Path] = None):
        self.checkpoint_dir = Path(checkpoint_dir or settings.CHECKPOINT_DIR)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, run_id: str) -> Path:
        return self.checkpoint_dir / f"{run_id}.json"

    def exists(self, run_id: str) -> bool:
        return self.path_for(run_id).exists()

    def save(self, checkpoint: SimulationCheckpoint) -> Path:
        """Write through a scratch file and rename it into place."""
        path = self.path_for(checkpoint.run_id)
        try:
            scratch = path.with_suffix(".tmp")
            scratch.write_text(checkpoint.model_dump_json(), encoding="utf-8")
            scratch.replace(path)
            logger.info(f"Checkpoint for {checkpoint.run_id} saved at stage {checkpoint.stage}")
            return path
        except OSError as e:
            logger.error(f"Error saving checkpoint: {e}")
            raise

    def load(self, run_id: str) -> Optional[SimulationCheckpoint]:
        path = self.path_for(run_id)
        if not path.exists():
            logger.info(f"No checkpoint found for {run_id}")
            return None
        try:
            return SimulationCheckpoint.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            logger.error(f"Error loading checkpoint {path}: {e}")
            raise ConfigError(f"corrupt checkpoint {path}") from e

    def remove(self, run_id: str) -> None:
        self.path_for(run_id).unlink(missing_ok=True)
