"""Figure rendering for the report path. Headless backend only."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FLOOR = 1e-20   # semilog floor so exact zeros stay plottable


def render_histories(histories, path, target=None, title=None):
    """Render labeled convergence histories to a PNG file.

    histories: list of (label, ConvergenceHistory). Residual norm vs
    iteration always; with a target eigenvalue a second panel shows
    |lambda_k - target|. Returns the path written.
    """
    ncols = 2 if target is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6.0 * ncols, 4.5),
                             squeeze=False)
    ax = axes[0][0]
    for label, hist in histories:
        ax.semilogy(hist.k, np.maximum(hist.residual, FLOOR),
                    marker=".", label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("residual norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if target is not None:
        ax = axes[0][1]
        for label, hist in histories:
            err = np.maximum(hist.lambda_errors(target), FLOOR)
            ax.semilogy(hist.k, err, marker=".", label=label)
        ax.set_xlabel("iteration k")
        ax.set_ylabel("eigenvalue error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
