"""Which service laws are New-Better-than-Used?  F(s+t) <= F(s) F(t) on a grid."""

from multihop_aoi import DistSpec, check_nbu

catalog = {
    "exponential": DistSpec.exponential(5.0),
    "erlang(3)": DistSpec.erlang(3, 15.0),
    "gamma(3), mean .2": DistSpec.gamma_with_mean(3.0, 0.2),
    "gamma(.5), mean .2": DistSpec.gamma_with_mean(0.5, 0.2),
    "shifted exp": DistSpec.shifted_exponential(0.5, 2.0),
    "deterministic": DistSpec.deterministic(0.5),
    "geometric": DistSpec.geometric(0.3, 0.1),
}
for name, d in catalog.items():
    r = check_nbu(d)
    print(f"{name:20s} mean={d.mean():.3f}  NBU={r.holds!s:5s}  worst={r.worst_violation:+.2e} at {r.worst_point}")
