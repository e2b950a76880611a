"""Context managers for changing the numerical tolerances of the lab"""
from contextlib import contextmanager

_DEFAULTS = dict(
    membership_tol=1e-10,
    bilinear_tol=1e-8,
    orthonormal_tol=1e-12,
    tie_tol=1e-12,
    event_tol=1e-12,
    junction_radius=1e-9,
    event_budget=10000,
    fine_step=1e-3,
    horizon=1e3,
    transversal_tol=1e-6,
    min_row_samples=30,
    clamp_rounds=8,
)


class NumericContext:
    """Tolerances and defaults shared by every numerical routine of the package.

    Any field may be overridden by keyword. Unknown names are rejected so a typo in a configuration file does not pass
    silently.
    """

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(_DEFAULTS)
        if unknown:
            raise ValueError("Unknown tolerance names: %s" % ", ".join(sorted(unknown)))
        for key, value in _DEFAULTS.items():
            setattr(self, key, kwargs.get(key, value))

    def as_dict(self):
        """Return the fields as a plain dict"""
        return {key: getattr(self, key) for key in _DEFAULTS}

    def replace(self, **kwargs):
        """Return a copy with the given fields overridden"""
        return NumericContext(**{**self.as_dict(), **kwargs})

    def __repr__(self):
        return "NumericContext(%s)" % ", ".join("%s=%r" % kv for kv in self.as_dict().items())


# Replaced by set_numeric_context; other modules read it through get_active_context
_active_context = NumericContext()


def get_active_context():
    """Return the active NumericContext"""
    return _active_context


@contextmanager
def set_numeric_context(new_context):
    """Set a NumericContext as active"""
    global _active_context
    store = _active_context
    _active_context = new_context
    try:
        yield
    finally:
        _active_context = store
