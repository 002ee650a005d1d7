"""Hot kernels: a compiled Cython module and its numpy twin.

``covnet.kernels`` picks the compiled module when it imports, otherwise the
numpy fallback. Both expose the same functions with identical signatures.
"""
