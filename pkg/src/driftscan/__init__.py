"""driftscan: lifecycle monitoring for deployed predictive models.

Conformal p-values over nonconformity scores (with weak-supervision
min-scores), FDR-controlled detection of degraded subpopulations, a
penalized multi-scale scan that identifies the single worst region,
refitting estimators, and a seeded Gaussian-sequence simulation
harness.
"""

__version__ = "0.1.0"

from .conformal import (PValueTable, aggregate_region_pvalue, discrete_pvalue,
                        pvalue_table, randomized_pvalue, region_pvalues, zscore)
from .data_io import (Dataset, LabeledPoint, MalformedInputError, ScoreSample,
                      load_dataset, min_score, residual_score, score_dataset,
                      score_samples, write_dataset)
from .detect import (DetectionResult, RegionPValue, bhy_detect,
                     compute_region_pvalues, detect_regions, estimate_fdr)
from .identify import (ScanConfig, ScanResult, estimate_sigma, min_detectable_mu,
                       recovery_error, region_zscore, scan, scan_penalty)
from .refit import (RefitEstimate, StackWeights, SureSelection, average_predictions,
                    median_relative_abs_dev, nearest_region, refit_two_step,
                    stack_weights, sure_mle)
from .regions import (IntervalFamily, Region, RegionFamily, ball_family,
                      bind_calibration, explicit_family, interval_family,
                      load_family, partition_family)
from .sim import (GaussianInstance, SweepReport, correlation_distance, gen_instance,
                  hamming_distance, run_sweep, threshold_T, threshold_regime)
