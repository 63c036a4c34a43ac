"""Cross sections, sectional flows and expansivity diagnostics for flows on compact metric spaces."""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "space": ["Circle", "FlatTorus2", "CatSuspension", "GraphMetric", "CompactSample", "make_sample",
              "net", "ball", "hausdorff", "hausdorff_bruteforce", "ball_field", "transpose_field",
              "field_intersect", "one_parameter_neighborhoods"],
    "flow": ["CircleRotation", "TorusLinear", "CatSuspensionFlow", "OdeFlow", "certify_regularity",
             "inverse_flow", "evolve"],
    "forms": ["OneForm", "whitney_form", "time_form", "monotonizing_form", "antisymmetrize",
              "transverse_time_form", "distance_form"],
    "sections": ["SectionField", "kernel_section", "build_monotone_symmetric_sections", "leaf_sections",
                 "check_cross_section", "check_monotone", "check_symmetric", "flow_box", "project_field"],
    "dynamics": ["sectional_flow", "stable_set", "unstable_set", "diam_decay", "kato_window",
                 "limit_set", "stable_point_check", "wandering_check", "nontrivial_stable_continuum"],
    "expansivity": ["expansive_scan", "positive_expansive_check", "planar_obstruction_demo"],
    "errors": ["CrossfieldError", "DomainError", "ResourceError", "RegularityError",
               "PreconditionError", "ConfigError"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = sorted(_WHERE)


def __getattr__(name):
    if name in _WHERE:
        return getattr(import_module(f".{_WHERE[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
