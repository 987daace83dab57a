"""Phonon-assisted rate models and the toy-lattice mode pipeline."""
