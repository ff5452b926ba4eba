"""
Long-term memory: the classifier head with a stacked LSTM carried across frames.

Layout: LayerNorm(D) -> Linear(D, D_lstm) -> Dropout -> LayerNorm(D_lstm)
-> LSTM cells -> Dropout -> Linear(D_lstm, 2). The recurrent state is
passed in and returned explicitly, never kept on the module, so a single
head can serve any number of sessions.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import torch
import torch.nn as nn

from .config import HeadConfig
from .exceptions import StateMismatchError

STATE_FORMAT_VERSION = 1

LayerState = Tuple[torch.Tensor, torch.Tensor]


@dataclass(frozen=True)
class RecurrentState:
    """One (h, c) pair per LSTM cell, each of shape [B, D_lstm]"""
    layers: Tuple[LayerState, ...] = ()

    @classmethod
    def zeros(cls, batch: int, config: HeadConfig, dtype=torch.float32, device=None) -> 'RecurrentState':
        shape = (batch, config.lstm_width)
        return cls(tuple(
            (torch.zeros(shape, dtype=dtype, device=device), torch.zeros(shape, dtype=dtype, device=device))
            for _ in range(config.lstm_cells)
        ))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def batch_size(self) -> int:
        return self.layers[0][0].shape[0] if self.layers else 0

    def detach(self) -> 'RecurrentState':
        return RecurrentState(tuple((h.detach(), c.detach()) for h, c in self.layers))

    def clone(self) -> 'RecurrentState':
        return RecurrentState(tuple((h.detach().clone(), c.detach().clone()) for h, c in self.layers))

    def to_dict(self) -> Dict[str, Any]:
        """Versioned, ordered form for torch.save"""
        return {
            'format_version': STATE_FORMAT_VERSION,
            'widths': [h.shape[-1] for h, _ in self.layers],
            'layers': [{'h': h.detach().cpu().clone(), 'c': c.detach().cpu().clone()} for h, c in self.layers],
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], config: HeadConfig = None) -> 'RecurrentState':
        version = raw.get('format_version')
        if version != STATE_FORMAT_VERSION:
            raise StateMismatchError(f"Unsupported state format version {version}, expected {STATE_FORMAT_VERSION}")
        layers = tuple((layer['h'], layer['c']) for layer in raw.get('layers', []))
        state = cls(layers)
        if [h.shape[-1] for h, _ in layers] != list(raw.get('widths', [])):
            raise StateMismatchError("State widths do not match the stored tensors")
        if config is not None:
            check_state(state, config, state.batch_size)
        return state


def check_state(state: RecurrentState, config: HeadConfig, batch: int) -> None:
    if state.num_layers != config.lstm_cells:
        raise StateMismatchError(f"State has {state.num_layers} layers, the head has {config.lstm_cells} LSTM cells")
    for index, (h, c) in enumerate(state.layers):
        expected = (batch, config.lstm_width)
        if tuple(h.shape) != expected or tuple(c.shape) != expected:
            raise StateMismatchError(
                f"State layer {index} has shapes {tuple(h.shape)}/{tuple(c.shape)}, expected {expected}"
            )


class LongTermMemoryHead(nn.Module):
    def __init__(self, config: HeadConfig):
        super().__init__()
        self.config = config
        self.norm_in = nn.LayerNorm(config.input_dim)
        self.fc_in = nn.Linear(config.input_dim, config.lstm_width)
        self.dropout_in = nn.Dropout(config.dropout)
        self.norm_lstm = nn.LayerNorm(config.lstm_width)
        self.cells = nn.ModuleList([
            nn.LSTMCell(config.lstm_width, config.lstm_width) for _ in range(config.lstm_cells)
        ])
        self.dropout_out = nn.Dropout(config.dropout)
        self.classifier = nn.Linear(config.lstm_width, config.num_classes)

    def init_state(self, batch: int, dtype=None, device=None) -> RecurrentState:
        if batch < 1:
            raise ValueError(f"batch must be at least 1, got {batch}")
        reference = self.classifier.weight
        return RecurrentState.zeros(batch, self.config, dtype=dtype or reference.dtype, device=device or reference.device)

    def forward(self, x: torch.Tensor, state: RecurrentState) -> Tuple[torch.Tensor, RecurrentState]:
        """One frame: features [B, D] -> logits [B, 2] and the state advanced by one step"""
        if x.dim() != 2 or x.shape[1] != self.config.input_dim:
            raise StateMismatchError(f"Head expects features [B, {self.config.input_dim}], got {tuple(x.shape)}")
        check_state(state, self.config, x.shape[0])

        x = self.dropout_in(self.fc_in(self.norm_in(x)))
        x = self.norm_lstm(x)
        layers: List[LayerState] = []
        for cell, (h, c) in zip(self.cells, state.layers):
            h, c = cell(x, (h, c))
            layers.append((h, c))
            x = h
        logits = self.classifier(self.dropout_out(x))
        return logits, RecurrentState(tuple(layers))


def anomaly_score(logits: torch.Tensor) -> torch.Tensor:
    """Probability of the anomaly class, s[t] in (0, 1)"""
    probability = torch.softmax(logits, dim=-1)[..., 1]
    # Saturated softmax rounds to exactly 0 or 1; keep the score inside the open interval
    finfo = torch.finfo(probability.dtype)
    return probability.clamp(finfo.tiny, 1.0 - finfo.eps)
