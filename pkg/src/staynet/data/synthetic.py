"""Synthetic inpatient-discharge data with a known, learnable signal.

The generator draws patient attributes from fixed marginals, combines a
handful of them into a latent acuity score (with interactions and a
nonlinear diagnosis effect), and maps the score's ranks through a
geometric quantile function.  That construction pins the LoS marginal
exactly, so the long-stay tail P(LoS > 20) is 4% at any sample size,
while keeping LoS monotone in the latent score.  Total Costs is then
derived from LoS with lognormal noise, which makes it the strongest
single correlate of LoS with severity second, mirroring the shape of the
real discharge data this schema is modelled on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..tensor import Rng
from . import schema as sch
from .dataset import Column, Dataset

# geometric success probability with survival (1-p)^21 = 0.04,
# i.e. P(LoS > 20) is exactly 4%
GEOM_P = 1.0 - 0.04 ** (1.0 / 21.0)


def _zipf(n, offset):
    w = 1.0 / (np.arange(n) + offset)
    return w / w.sum()


@dataclass(frozen=True)
class SyntheticProfile:
    """Marginals and effect sizes; the defaults are the calibrated set."""

    severity_probs: tuple = (0.35, 0.32, 0.22, 0.11)
    severity_effect: tuple = (0.0, 0.28, 0.6, 1.05)
    age_probs: tuple = (0.15, 0.10, 0.20, 0.25, 0.30)
    age_effect: tuple = (0.18, 0.0, 0.22, 0.5, 0.8)
    admission_probs: tuple = (0.15, 0.56, 0.12, 0.02, 0.03, 0.12)
    admission_effect: tuple = (0.1, 0.55, 0.0, 0.2, 0.85, 0.4)
    diag_amplitude: float = 0.55
    diag_waves: float = 2.0
    sev_age_weight: float = 0.7
    adm_age_weight: float = 0.6
    noise_sigma: float = 0.35
    gender_probs: tuple = (0.53, 0.44, 0.03)
    medsurg_probs: tuple = (0.75, 0.25)
    cost_base: float = 4000.0
    cost_slope: float = 2500.0
    cost_noise: float = 0.8
    geom_p: float = GEOM_P
    max_los: int = 140


def default_profile():
    return SyntheticProfile()


def _geom_quantile(u, p, max_los):
    """Quantile of the geometric distribution on {0, 1, 2, ...}."""
    los = np.ceil(np.log1p(-u) / math.log1p(-p)) - 1.0
    return np.clip(los, 0, max_los)


def generate(n, seed, profile=None):
    """Build n synthetic discharge rows; (n, seed) pins every byte.

    Returns a Dataset on the standard 23-column schema with no missing
    cells.  LoS values are whole numbers of days in [0, 140].
    """
    if n < 1:
        raise ValueError(f"need at least one row, got {n}")
    prof = profile or default_profile()
    rng = Rng(seed)
    schema = sch.sparcs_schema()

    def pick(cats, probs=None, idx=None):
        if idx is None:
            idx = rng.choice(len(cats), shape=n, p=None if probs is None else np.asarray(probs))
        return np.asarray(cats, dtype=object)[idx], idx

    service, _ = pick(sch.SERVICE_AREAS, (0.08, 0.07, 0.08, 0.12, 0.17, 0.34, 0.05, 0.09))
    county, _ = pick(sch.COUNTIES, _zipf(len(sch.COUNTIES), 3.0))
    age, age_i = pick(sch.AGE_GROUPS, prof.age_probs)
    zipcode = rng.integers(100, 150, shape=n).astype(np.float64)
    gender, _ = pick(sch.GENDERS, prof.gender_probs)
    race, _ = pick(sch.RACES, (0.18, 0.03, 0.24, 0.55))
    ethnicity, _ = pick(sch.ETHNICITIES, (0.02, 0.75, 0.15, 0.08))
    admission, adm_i = pick(sch.ADMISSION_TYPES, prof.admission_probs)
    severity, sev_i = pick(sch.SEVERITY_CODES, prof.severity_probs)
    severity_name = np.asarray(sch.SEVERITY_NAMES, dtype=object)[sev_i]
    payment, _ = pick(sch.PAYMENT_TYPES,
                      (0.04, 0.005, 0.02, 0.055, 0.27, 0.35, 0.04, 0.17, 0.05))

    disp_probs = np.full(len(sch.DISPOSITIONS), 0.16 / 15.0)
    disp_probs[sch.DISPOSITIONS.index("Home or Self Care")] = 0.55
    disp_probs[sch.DISPOSITIONS.index("Home w/ Home Health Services")] = 0.15
    disp_probs[sch.DISPOSITIONS.index("Skilled Nursing Home")] = 0.12
    disp_probs[sch.DISPOSITIONS.index("Expired")] = 0.02
    disp_probs /= disp_probs.sum()
    disposition, _ = pick(sch.DISPOSITIONS, disp_probs)

    diag_i = rng.choice(len(sch.CCSR_CODES), shape=n)
    ccsr_code = np.asarray(sch.CCSR_CODES, dtype=object)[diag_i]
    ccsr_name = np.asarray(sch.CCSR_NAMES, dtype=object)[diag_i]
    drg_i = rng.choice(len(sch.DRG_CODES), shape=n, p=_zipf(len(sch.DRG_CODES), 10.0))
    drg_code = np.asarray(sch.DRG_CODES, dtype=object)[drg_i]
    drg_name = np.asarray(sch.DRG_NAMES, dtype=object)[drg_i]
    mdc_i = drg_i % len(sch.MDC_CODES)
    mdc_code = np.asarray(sch.MDC_CODES, dtype=object)[mdc_i]
    mdc_name = np.asarray(sch.MDC_NAMES, dtype=object)[mdc_i]

    keep_sev = rng.uniform(shape=n) < 0.6
    risk_i = np.where(keep_sev, sev_i, rng.choice(4, shape=n))
    risk = np.asarray(sch.RISK_LEVELS, dtype=object)[risk_i]
    medsurg, _ = pick(sch.MED_SURG, prof.medsurg_probs)
    is_emergency = adm_i == sch.ADMISSION_TYPES.index("Emergency")
    ed_draw = rng.uniform(shape=n)
    ed = np.where(np.where(is_emergency, ed_draw < 0.92, ed_draw < 0.08), "Y", "N").astype(object)

    sev_e = np.asarray(prof.severity_effect)[sev_i]
    age_e = np.asarray(prof.age_effect)[age_i]
    adm_e = np.asarray(prof.admission_effect)[adm_i]
    diag_e = prof.diag_amplitude * 0.5 * (
        np.sin(2.0 * math.pi * prof.diag_waves * (diag_i / len(sch.CCSR_CODES))) + 1.0
    )
    score = (sev_e + age_e + adm_e + diag_e
             + prof.sev_age_weight * sev_e * age_e
             + prof.adm_age_weight * adm_e * age_e
             + rng.normal(shape=n, std=prof.noise_sigma))

    # rank map: the i-th smallest score gets the i-th geometric quantile,
    # so the LoS marginal is exact and monotone in the latent score
    order = np.argsort(score, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    u = (ranks + 0.5) / n
    los = _geom_quantile(u, prof.geom_p, prof.max_los)

    cost = (prof.cost_base + prof.cost_slope * los) * np.exp(
        rng.normal(shape=n, std=prof.cost_noise))
    cost = np.clip(cost, 100.0, 200000.0)

    columns = {
        "Hospital Service Area": Column(service),
        "Hospital County": Column(county),
        "AgeGroup": Column(age),
        "ZipCode 3Digits": Column(zipcode),
        "Gender": Column(gender),
        "Race": Column(race),
        "Ethnicity": Column(ethnicity),
        "Type Of Admission": Column(admission),
        "APR Severity Of Illness Code": Column(severity),
        "APR Severity Of Illness Description": Column(severity_name),
        "Payment Typology 1": Column(payment),
        "Total Costs": Column(cost),
        sch.TARGET_COLUMN: Column(los),
        "Patient Disposition": Column(disposition),
        "CCSR Diagnosis Code": Column(ccsr_code),
        "CCSR Diagnosis Description": Column(ccsr_name),
        "APR DRG Code": Column(drg_code),
        "APR DRG Description": Column(drg_name),
        "APR MDC Code": Column(mdc_code),
        "APR MDC Description": Column(mdc_name),
        "APR Risk Of Mortality": Column(risk),
        "APR Medical Surgical Description": Column(medsurg),
        "Emergency Department Indicator": Column(ed),
    }
    return Dataset(schema, columns)


def punch_missing(dataset, fraction, seed, columns=None):
    """Blank a seeded random fraction of cells in the given columns.

    The target column is never touched unless named explicitly.  Useful
    for exercising imputation on otherwise complete data.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    names = list(columns) if columns is not None else [
        n for n in dataset.schema.names() if n != dataset.schema.target.name
    ]
    rng = Rng(seed)
    out = dataset.copy()
    for name in names:
        col = out[name]
        hit = rng.uniform(shape=dataset.n_rows) < fraction
        col.mask |= hit
        if col.is_numeric:
            col.values[hit] = np.nan
        else:
            col.values[hit] = ""
    return out
