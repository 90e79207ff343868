"""Small builders shared across test modules."""

import numpy as np

from eventcast.distributions import inverse_survival
from eventcast.domain import Group, PatientRecord, TrialSnapshot


def snapshot_from_groups(x=(), z=(), y=(), **kwargs):
    """A snapshot whose grouped exposures are exactly x, z, y."""
    patients = [PatientRecord(v, Group.EVENT) for v in x]
    patients += [PatientRecord(v, Group.AT_RISK) for v in z]
    patients += [PatientRecord(v, Group.DROPOUT) for v in y]
    longest = max((p.exposure_days for p in patients), default=0.0)
    kwargs.setdefault("cutoff_day", longest)
    kwargs.setdefault("sample_size", max(len(patients), 1))
    return TrialSnapshot(patients=tuple(patients), **kwargs)


def draw_grouped(params, n, censor_day, rng):
    """Latent draw of n patients, all censored at censor_day, as (x, z, y).

    Deliberately independent of the package's trial generator: plain inverse
    sampling of the two waiting times plus a cure coin.
    """
    cured = rng.random(n) < params.cure_prob
    event = np.asarray(inverse_survival(params.event, 1.0 - rng.random(n)))
    event[cured] = np.inf
    drop = np.asarray(inverse_survival(params.dropout, 1.0 - rng.random(n)))
    x = event[(event <= drop) & (event <= censor_day)]
    y = drop[(drop < event) & (drop <= censor_day)]
    n_atrisk = int(np.sum(np.minimum(event, drop) > censor_day))
    z = np.full(n_atrisk, float(censor_day))
    return x, z, y
