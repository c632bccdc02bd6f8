"""Bilinear quadrature rules: point sets x and weight matrices W such that
f(x)* W g(y) evaluates an L2 or weighted H1 inner product exactly on a chosen
polynomial or trigonometric space and near-minimally outside it."""

__version__ = "0.1.0"

from .domains import AffineMap, Domain, DomainError, MappedDomain  # noqa: F401
from .basis import (BasisSet, EvalMatrix, eval_matrix, jacobi_eval,  # noqa: F401
                    koornwinder_eval, legendre_eval, poly_space,
                    space_dimension, trig_eval, trig_space, zernike_eval)
from .refquad import (ClassicalRule, ConstructionError, GramMatrix,  # noqa: F401
                      InnerProductSpec, gauss_legendre, gram_matrix, h1, l2,
                      monomial_integral, orthonormalize, reference_rule,
                      trapezoid_trig)
from .objective import (ObjectiveContext, sigma_general, sigma_of_rule,  # noqa: F401
                        sigma_symmetric, w_general, w_invertible)
from .optimizer import OptConfig, OptResult, bfgs_descent, finite_diff_gradient, minimize  # noqa: F401
from .rules import (BilinearRule, RuleFormatError, RuleIntegrityError,  # noqa: F401
                    apply_rule, build_rule, exactness_residual, kappa_inf,
                    load_rule, project, pushforward_h1, pushforward_l2,
                    save_rule)
