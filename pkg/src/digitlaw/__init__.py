"""digitlaw: image forensics via first-digit statistics of gradient magnitudes."""

__version__ = "0.1.0"

from digitlaw.benford import (
    DigitDistribution,
    DivergenceReport,
    benford_pmf,
    digit_histogram,
    first_digit,
    kl_divergence,
    ks_statistic,
)
from digitlaw.imaging import (
    SOBEL_HORIZONTAL,
    SOBEL_VERTICAL,
    ImageTensor,
    Kernel,
    Scale,
    convolve2d,
    gradient_magnitude,
    sobel_gradients,
)

__all__ = [
    "DigitDistribution",
    "DivergenceReport",
    "ImageTensor",
    "Kernel",
    "SOBEL_HORIZONTAL",
    "SOBEL_VERTICAL",
    "Scale",
    "benford_pmf",
    "convolve2d",
    "digit_histogram",
    "first_digit",
    "gradient_magnitude",
    "kl_divergence",
    "ks_statistic",
    "sobel_gradients",
    "__version__",
]
