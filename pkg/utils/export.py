"""Import/export utilities for MDPs, metrics, datasets and campaign results"""

import io
import json
import logging
from datetime import datetime
from typing import Dict

import numpy as np
import pandas as pd
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core.exceptions import InvalidParameter
from core.mdp import Mdp, validate_mdp
from core.metrics import MetricMatrix
from core.approximation import Dataset, DATASET_COLUMNS

logger = logging.getLogger(__name__)


# ---- MDP JSON ----

def mdp_to_dict(m: Mdp) -> Dict:
    return {
        'num_states': int(m.num_states),
        'num_actions': int(m.num_actions),
        'gamma': float(m.gamma),
        'reward_max': float(m.reward_max),
        'rewards': m.rewards.tolist(),
        'transitions': m.transitions.tolist(),
    }


def mdp_from_dict(payload: Dict) -> Mdp:
    """
    Build and validate an MDP from its JSON form.

    Raises:
        InvalidParameter: if fields are missing or the declared sizes disagree with the arrays
    """
    try:
        m = Mdp(
            rewards=np.asarray(payload['rewards'], dtype=float),
            transitions=np.asarray(payload['transitions'], dtype=float),
            gamma=float(payload['gamma']),
            reward_max=float(payload['reward_max']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidParameter(f"malformed MDP document: {e}")
    if (m.num_states, m.num_actions) != (payload.get('num_states'), payload.get('num_actions')):
        raise InvalidParameter(
            f"declared size {payload.get('num_states')}x{payload.get('num_actions')} "
            f"does not match arrays {m.num_states}x{m.num_actions}"
        )
    validate_mdp(m)
    return m


def save_mdp(m: Mdp, path: str) -> None:
    with open(path, 'w') as f:
        json.dump(mdp_to_dict(m), f)


def load_mdp(path: str) -> Mdp:
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidParameter(f"{path} is not valid JSON: {e}")
    return mdp_from_dict(payload)


# ---- MetricMatrix JSON ----

def save_metric(metric: MetricMatrix, path: str) -> None:
    with open(path, 'w') as f:
        json.dump(metric.to_dict(), f)


def load_metric(path: str) -> MetricMatrix:
    with open(path) as f:
        return MetricMatrix.from_dict(json.load(f))


# ---- Dataset CSV ----

def write_dataset_csv(data: Dataset, path: str) -> None:
    data.frame.to_csv(path, index=False, columns=DATASET_COLUMNS, lineterminator='\n')


def read_dataset_csv(path: str) -> Dataset:
    """
    Read a dataset with header s,a,s_next,r.

    Raises:
        InvalidParameter: if the header is wrong or a value does not parse
    """
    frame = pd.read_csv(path)
    if list(frame.columns) != DATASET_COLUMNS:
        raise InvalidParameter(f"dataset header must be {','.join(DATASET_COLUMNS)}, got {','.join(frame.columns)}")
    try:
        return Dataset(frame)
    except (TypeError, ValueError) as e:
        raise InvalidParameter(f"malformed dataset {path}: {e}")


# ---- Campaign results ----

def export_to_csv(df: pd.DataFrame) -> bytes:
    """
    Export DataFrame to CSV bytes.

    Floats use pandas' default shortest repr, which parses back to the same
    double, and lines end with a bare newline, so identical campaigns give
    identical bytes.

    Args:
        df: DataFrame to export

    Returns:
        CSV file as bytes
    """
    return df.to_csv(index=False, lineterminator='\n').encode('utf-8')


def write_campaign_csv(df: pd.DataFrame, path: str) -> None:
    with open(path, 'wb') as f:
        f.write(export_to_csv(df))


def save_stage_report(report: Dict, path: str) -> None:
    with open(path, 'w') as f:
        json.dump(report, f, indent=2, sort_keys=True)


def format_summary_for_export(summary_df: pd.DataFrame) -> pd.DataFrame:
    """
    Format a campaign summary table for export.

    Args:
        summary_df: table from core.experiments.summary_table

    Returns:
        Formatted DataFrame
    """
    if summary_df.empty:
        return summary_df

    export_df = summary_df.copy()
    export_df['containment_rate'] = (export_df['containment_rate'] * 100).round(2)
    export_df['mean_tightness'] = export_df['mean_tightness'].round(4)
    export_df['empirical'] = export_df['empirical'].map({True: 'Yes', False: 'No'})

    column_mapping = {
        'bound': 'Bound',
        'containment_rate': 'Containment (%)',
        'mean_tightness': 'Bound / Ground Truth',
        'empirical': 'Empirical Only',
    }
    return export_df.rename(columns=column_mapping)


def export_to_excel(df: pd.DataFrame, sheet_name: str = "Campaign Summary") -> bytes:
    """
    Export DataFrame to Excel bytes with auto-sized columns.

    Args:
        df: DataFrame to export
        sheet_name: Excel sheet name

    Returns:
        Excel file as bytes
    """
    output = io.BytesIO()

    with pd.ExcelWriter(output, engine='openpyxl') as writer:
        df.to_excel(writer, sheet_name=sheet_name, index=False)
        worksheet = writer.sheets[sheet_name]

        for column in worksheet.columns:
            max_length = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            worksheet.column_dimensions[column[0].column_letter].width = min(max_length + 2, 50)

    return output.getvalue()


def get_export_filename(prefix: str = "gbsm_campaign", extension: str = "csv") -> str:
    """
    Generate export filename with timestamp.

    Args:
        prefix: Filename prefix
        extension: File extension

    Returns:
        Filename string
    """
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    return f"{prefix}_{timestamp}.{extension}"
