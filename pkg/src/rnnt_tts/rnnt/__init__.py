from .loss import (
    AlignmentPath,
    Lattice,
    LatticeError,
    best_path,
    edge_scores,
    enumerate_paths,
    frame_map,
    logsumexp,
    path_log_prob,
    rnnt_grad,
    rnnt_loss,
    transducer_loss,
)

__all__ = [
    "AlignmentPath", "Lattice", "LatticeError", "best_path", "edge_scores", "enumerate_paths", "frame_map",
    "logsumexp", "path_log_prob", "rnnt_grad", "rnnt_loss", "transducer_loss",
]
