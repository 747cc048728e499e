"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                           VERDICT SUMMARIES                                   ║
║                                                                               ║
║  One-line summaries printed after each task, selected by task name.           ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""


# ══════════════════════════════════════════════════════════════════════════════
#  SUMMARY TEMPLATES
# ══════════════════════════════════════════════════════════════════════════════

SUMMARIES = {
    "simulate": "simulate: N={n_particles} steps={steps} E|X_T|^{p:g}={terminal:.6g}",
    "picard": "picard: {status} after {iterations} iterations, last distance {distance:.3e}",
    "certify": "certify: pathwise exponent {pathwise:.6g} at order {order:g}, moment exponent {moment}",
    "verify-moment": "verify-moment: {verdict}{where}",
    "verify-pathwise": "verify-pathwise: {verdict} (estimated {estimated:.4g}, certified {certified:.4g}){where}",
    "verify-growth": "verify-growth: {verdict}{where}",
    "verify-exponential": "verify-exponential: {verdict}{where}",
    "bihari": "bihari: bound at T {terminal:.6g}, domain left at t={t0_plus:g}",
    "refused": "{task}: refused ({reason})",
    "blow-up": "{task}: blow-up at step {step} (t={time:g})",
    "config-error": "config error: {reason}",
    "io-error": "i/o error: {reason}",
}


def get_summary(task: str, /, **fields) -> str:
    """Format the summary line of ``task``; ``where`` defaults to the first failing time."""
    if "verdict" in fields and "where" not in fields:
        t_star = fields.get("t_star")
        fields["where"] = "" if t_star is None else f" at t={t_star:g}"
    return SUMMARIES[task].format(**fields)
