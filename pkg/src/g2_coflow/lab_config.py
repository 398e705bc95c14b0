import typing


class LabConfig:
    """
    Global numerical configuration shared by every g2_coflow operation
    """

    _default_scheme = "spectral"
    _max_tensor_elements = 60_000_000
    _noise_floor_ratio = 1e-8
    _phi_tolerance = 1e-12
    _phi_max_iterations = 50
    _positivity_floor = 1e-10
    _spectral_coclosed_threshold = 1e-8
    _fd4_coclosed_factor = 10.0

    @classmethod
    def set_default_scheme(cls, scheme: str) -> None:
        """
        Set the derivative scheme used when an operation is called without one
        """
        if scheme not in ("spectral", "fd4"):
            raise ValueError(f"unknown derivative scheme '{scheme}', expected 'spectral' or 'fd4'")
        cls._default_scheme = scheme

    @classmethod
    def default_scheme(cls) -> str:
        """
        Returns the derivative scheme used when an operation is called without one
        """
        return cls._default_scheme

    @classmethod
    def set_max_tensor_elements(cls, elements: int) -> None:
        """
        Set the largest number of float64 elements a single dense tensor field may hold
        """
        cls._max_tensor_elements = int(elements)

    @classmethod
    def max_tensor_elements(cls) -> int:
        return cls._max_tensor_elements

    @classmethod
    def set_noise_floor_ratio(cls, ratio: float) -> None:
        """
        Set the share of spectral energy above 2/3 Nyquist that flags a field as noise-dominated
        """
        cls._noise_floor_ratio = ratio

    @classmethod
    def noise_floor_ratio(cls) -> float:
        return cls._noise_floor_ratio

    @classmethod
    def set_phi_solver(cls, tolerance: float = 1e-12, max_iterations: int = 50) -> None:
        """
        Set the default tolerance and iteration cap for recovering φ from ψ
        """
        cls._phi_tolerance = tolerance
        cls._phi_max_iterations = max_iterations

    @classmethod
    def phi_tolerance(cls) -> float:
        return cls._phi_tolerance

    @classmethod
    def phi_max_iterations(cls) -> int:
        return cls._phi_max_iterations

    @classmethod
    def positivity_floor(cls) -> float:
        """
        Returns the smallest admissible eigenvalue of the normalised bilinear form of a positive 3-form
        """
        return cls._positivity_floor

    @classmethod
    def set_coclosed_thresholds(cls, spectral: float = 1e-8, fd4_factor: float = 10.0) -> None:
        """
        Set the coclosedness thresholds: absolute for the spectral scheme, the factor of h⁴·‖ψ‖∞ for fd4
        """
        cls._spectral_coclosed_threshold = spectral
        cls._fd4_coclosed_factor = fd4_factor

    @classmethod
    def coclosed_threshold(cls, scheme: str, spacing: float, psi_sup: float) -> float:
        """
        Returns the largest ‖dψ‖∞ still treated as coclosed: the spectral threshold, or for fd4
        max(fd4_factor·h⁴·‖ψ‖∞, spectral threshold) so that fine fd4 grids never ask for less than the spectral value

            Parameters:
                scheme (str): derivative scheme in use
                spacing (float): smallest active grid spacing
                psi_sup (float): sup norm of the ψ components

            Returns:
                threshold (float)
        """
        if scheme == "spectral":
            return cls._spectral_coclosed_threshold
        return max(cls._fd4_coclosed_factor * spacing ** 4 * psi_sup, cls._spectral_coclosed_threshold)

    @classmethod
    def reset(cls) -> None:
        """
        Restore every default
        """
        defaults: typing.Dict[str, typing.Any] = {
            "_default_scheme": "spectral",
            "_max_tensor_elements": 60_000_000,
            "_noise_floor_ratio": 1e-8,
            "_phi_tolerance": 1e-12,
            "_phi_max_iterations": 50,
            "_positivity_floor": 1e-10,
            "_spectral_coclosed_threshold": 1e-8,
            "_fd4_coclosed_factor": 10.0,
        }
        for name, value in defaults.items():
            setattr(cls, name, value)
