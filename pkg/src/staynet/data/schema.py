"""Column schemas for the inpatient-discharge table.

The canonical table has 22 predictor columns plus the Length Of Stay
target.  Kinds are numerical (with inclusive bounds), categorical (with a
fixed category set), logical (Y/N), and date (ISO yyyy-mm-dd, used only
when a file carries an admission date to engineer features from).
"""

from __future__ import annotations

from dataclasses import dataclass, field

KINDS = ("numerical", "categorical", "logical", "date")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    categories: tuple = None
    bounds: tuple = None
    is_target: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and not self.categories:
            raise ValueError(f"column {self.name!r}: categorical without categories")
        if self.kind == "logical":
            object.__setattr__(self, "categories", ("N", "Y"))
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"column {self.name!r}: duplicate categories")
        if self.bounds is not None and not (self.bounds[0] <= self.bounds[1]):
            raise ValueError(f"column {self.name!r}: bounds {self.bounds} reversed")


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        targets = [c for c in self.columns if c.is_target]
        if len(targets) != 1:
            raise ValueError(f"schema needs exactly one target column, found {len(targets)}")

    def names(self):
        return [c.name for c in self.columns]

    def __getitem__(self, name):
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return any(c.name == name for c in self.columns)

    @property
    def target(self):
        return next(c for c in self.columns if c.is_target)

    def feature_names(self):
        return [c.name for c in self.columns if not c.is_target]

    def drop(self, name):
        if name == self.target.name:
            raise ValueError(f"cannot drop the target column {name!r}")
        kept = tuple(c for c in self.columns if c.name != name)
        if len(kept) == len(self.columns):
            raise KeyError(name)
        return DatasetSchema(kept)

    def extend(self, columns):
        return DatasetSchema(self.columns + tuple(columns))


SERVICE_AREAS = ("Capital/Adirondack", "Central NY", "Finger Lakes", "Hudson Valley",
                 "Long Island", "New York City", "Southern Tier", "Western NY")
COUNTIES = tuple(f"County {i:02d}" for i in range(1, 58))
AGE_GROUPS = ("0 to 17", "18 to 29", "30 to 49", "50 to 69", "70 or Older")
GENDERS = ("F", "M", "U")
RACES = ("Black/African American", "Multi-racial", "Other Race", "White")
ETHNICITIES = ("Multi-ethnic", "Not Span/Hispanic", "Spanish/Hispanic", "Unknown")
ADMISSION_TYPES = ("Elective", "Emergency", "Newborn", "Not Available", "Trauma", "Urgent")
SEVERITY_CODES = ("1", "2", "3", "4")
SEVERITY_NAMES = ("Minor", "Moderate", "Major", "Extreme")
PAYMENT_TYPES = ("Blue Cross/Blue Shield", "Department of Corrections",
                 "Federal/State/Local/VA", "Managed Care, Unspecified", "Medicaid",
                 "Medicare", "Miscellaneous/Other", "Private Health Insurance", "Self-Pay")
DISPOSITIONS = ("Another Type Not Listed", "Cancer Center or Children's Hospital",
                "Court/Law Enforcement", "Critical Access Hospital", "Expired",
                "Facility w/ Custodial/Supportive Care", "Federal Health Care Facility",
                "Home or Self Care", "Home w/ Home Health Services",
                "Hosp Basd Medicare Approved Swing Bed", "Hospice - Home",
                "Hospice - Medical Facility", "Inpatient Rehabilitation Facility",
                "Left Against Medical Advice", "Medicaid Cert Nursing Facility",
                "Medicare Cert Long Term Care Hospital",
                "Psychiatric Hospital or Unit of Hosp", "Short-term Hospital",
                "Skilled Nursing Home")
CCSR_CODES = tuple(f"CCSR{i:03d}" for i in range(1, 472))
CCSR_NAMES = tuple(f"Condition {i:03d}" for i in range(1, 473))
DRG_CODES = tuple(f"{i:03d}" for i in range(1, 327))
DRG_NAMES = tuple(f"DRG Condition {i:03d}" for i in range(1, 327))
MDC_CODES = tuple(f"{i:02d}" for i in range(1, 25))
MDC_NAMES = tuple(f"MDC Category {i:02d}" for i in range(1, 25))
RISK_LEVELS = ("Minor", "Moderate", "Major", "Extreme")
MED_SURG = ("Medical", "Surgical")

TARGET_COLUMN = "Length Of Stay"
KEY_COLUMNS = ("AgeGroup", "Gender", "Race", "Ethnicity")


def sparcs_schema():
    """The 23-column inpatient schema: 22 predictors plus the LoS target."""
    return DatasetSchema((
        ColumnSchema("Hospital Service Area", "categorical", SERVICE_AREAS),
        ColumnSchema("Hospital County", "categorical", COUNTIES),
        ColumnSchema("AgeGroup", "categorical", AGE_GROUPS),
        ColumnSchema("ZipCode 3Digits", "numerical", bounds=(100, 149)),
        ColumnSchema("Gender", "categorical", GENDERS),
        ColumnSchema("Race", "categorical", RACES),
        ColumnSchema("Ethnicity", "categorical", ETHNICITIES),
        ColumnSchema("Type Of Admission", "categorical", ADMISSION_TYPES),
        ColumnSchema("APR Severity Of Illness Code", "categorical", SEVERITY_CODES),
        ColumnSchema("APR Severity Of Illness Description", "categorical", SEVERITY_NAMES),
        ColumnSchema("Payment Typology 1", "categorical", PAYMENT_TYPES),
        ColumnSchema("Total Costs", "numerical", bounds=(100.0, 200000.0)),
        ColumnSchema(TARGET_COLUMN, "numerical", bounds=(0.0, 140.0), is_target=True),
        ColumnSchema("Patient Disposition", "categorical", DISPOSITIONS),
        ColumnSchema("CCSR Diagnosis Code", "categorical", CCSR_CODES),
        ColumnSchema("CCSR Diagnosis Description", "categorical", CCSR_NAMES),
        ColumnSchema("APR DRG Code", "categorical", DRG_CODES),
        ColumnSchema("APR DRG Description", "categorical", DRG_NAMES),
        ColumnSchema("APR MDC Code", "categorical", MDC_CODES),
        ColumnSchema("APR MDC Description", "categorical", MDC_NAMES),
        ColumnSchema("APR Risk Of Mortality", "categorical", RISK_LEVELS),
        ColumnSchema("APR Medical Surgical Description", "categorical", MED_SURG),
        ColumnSchema("Emergency Department Indicator", "logical"),
    ))
