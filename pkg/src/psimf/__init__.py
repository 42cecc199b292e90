"""Post-clustering selective inference for multi-feature longitudinal data."""

__version__ = "0.1.0"

from .cluster import Partition, hclust2, kmeans2, partition_equal
from .embed import (
    BasisSpec,
    EmbeddedTensor,
    design_matrix,
    eigenfunction,
    embed_dataset,
    embed_record,
    hermite_physicist,
)
from .selinf import (
    SelectiveTestReport,
    TestConfig,
    chi_density,
    chi_survival,
    indicator_vector,
    orthogonal_decompose,
    perturb,
    run_psimf,
    selective_p_value,
    wald_p_value,
)
from .simkit import (
    KernelSpec,
    LongitudinalDataset,
    MeanSpec,
    MisspecProcessSpec,
    SamplingPlan,
    build_covariance_matrix,
    generate_dataset,
    generate_misspecified_dataset,
    sample_mgp_subject,
    sample_misspecified_subject,
    zero_kernel,
)
from .whiten import (
    CovarianceEstimate,
    WhitenedTensor,
    compute_population_gram_and_asymptotic_cov,
    inv_sqrt_psd,
    oracle_embedding_covariance,
    sample_covariance,
    whiten_dataset,
)
