"""Data schema, containers, CSV I/O, wrangling, and synthetic generation."""

from .dataset import Column, Dataset
from .io import MISSING_TOKENS, RejectionReport, atomic_write_text, dataset_to_csv_text, parse_csv, write_csv
from .schema import (
    KEY_COLUMNS,
    TARGET_COLUMN,
    ColumnSchema,
    DatasetSchema,
    sparcs_schema,
)
from .synthetic import GEOM_P, SyntheticProfile, default_profile, generate, punch_missing
from .wrangle import (
    DATE_COLUMN,
    UnseenCategoryError,
    WranglePlan,
    apply_plan,
    apply_scale,
    encode_categories,
    engineer_date_features,
    fit_encoders,
    fit_scale,
    inverse_scale,
    knn_impute,
    scale_minmax,
    wrangle,
)

__all__ = [
    "Column", "ColumnSchema", "Dataset", "DatasetSchema", "DATE_COLUMN", "GEOM_P",
    "KEY_COLUMNS", "MISSING_TOKENS", "RejectionReport", "SyntheticProfile",
    "TARGET_COLUMN", "UnseenCategoryError", "WranglePlan", "apply_plan",
    "apply_scale", "atomic_write_text", "dataset_to_csv_text", "default_profile",
    "encode_categories", "engineer_date_features", "fit_encoders", "fit_scale",
    "generate", "inverse_scale", "knn_impute", "parse_csv", "punch_missing",
    "scale_minmax", "sparcs_schema", "wrangle", "write_csv",
]
