from typing import Tuple

import torch
import torch.nn as nn

from .config import ModelConfig
from .exceptions import ConfigurationError
from .ltmm import LongTermMemoryHead, RecurrentState
from .stmm import ShortTermMemory


class AnomalyDetector(nn.Module):
    """STMM -> Reducer -> head; one call scores one frame given its NF-frame clip"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.head.input_dim != config.stmm.feature_dim:
            raise ConfigurationError(
                f"Head input width {config.head.input_dim} does not match STMM feature width {config.stmm.feature_dim}"
            )
        self.config = config
        self.stmm = ShortTermMemory(config.stmm)
        self.head = LongTermMemoryHead(config.head)

    @property
    def nf(self) -> int:
        return self.config.stmm.nf

    def init_state(self, batch: int = 1) -> RecurrentState:
        return self.head.init_state(batch)

    def features(self, clips: torch.Tensor) -> torch.Tensor:
        return self.stmm(clips)

    def forward(self, clip: torch.Tensor, state: RecurrentState) -> Tuple[torch.Tensor, RecurrentState]:
        return self.head(self.stmm(clip), state)
