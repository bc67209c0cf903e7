"""Numerical DPW construction of the Lawson surfaces xi_{1,g} in S^3.

Modules: ``loopalg`` (2x2 matrices and Laurent loops), ``fuchsian``
(Fuchsian systems on the four-punctured sphere and their moduli),
``monodromy`` (transport, monodromy, unitarizability), ``potential``
(the symmetric DPW potential), ``solver`` (closing conditions and
continuation in t), ``surface`` (Iwasawa, Sym point immersion, meshes)
and ``cli``.
"""

__version__ = "0.1.0"
